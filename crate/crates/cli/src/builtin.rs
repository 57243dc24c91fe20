//! Configs shipped with the binary, addressed as `builtin:NAME`.

pub const BUILTINS: &[(&str, &str)] = &[
    ("zero", include_str!("../configs/zero.conf")),
    ("bump_unit", include_str!("../configs/bump_unit.conf")),
    ("bump_trig", include_str!("../configs/bump_trig.conf")),
    ("packet_crosscheck", include_str!("../configs/packet_crosscheck.conf")),
    ("blowup", include_str!("../configs/blowup.conf")),
    ("picard_bump", include_str!("../configs/picard_bump.conf")),
];

pub fn get(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn builtins_parse() {
        for (name, text) in BUILTINS {
            RunConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(get("nope").is_none());
    }
}
