//! Norms and sweep studies (placeholder while the lower layers are built).
