//! Matched-asymptotics construction (placeholder while the lower layers are built).
