//! Kinetic slab solver (placeholder while the lower layers are built).
