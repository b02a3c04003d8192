//! Scenarios shipped with the crate.

pub const BUNDLED: &[(&str, &str)] = &[
    ("two-network", include_str!("../../scenarios/two-network.toml")),
    ("revoke-carrier", include_str!("../../scenarios/revoke-carrier.toml")),
    ("cert-rotation", include_str!("../../scenarios/cert-rotation.toml")),
    ("retry-divergence", include_str!("../../scenarios/retry-divergence.toml")),
    ("concurrent-commit", include_str!("../../scenarios/concurrent-commit.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
