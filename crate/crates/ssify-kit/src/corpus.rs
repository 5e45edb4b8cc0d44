//! The bundled benchmark corpus, embedded so the CLI verification suites
//! run the same programs everywhere.

pub const DIAMOND: &str = include_str!("../corpus/diamond.ssir");
pub const TAINT_ECHOES: &str = include_str!("../corpus/taint_echoes.ssir");
pub const NULL_CHAIN: &str = include_str!("../corpus/null_chain.ssir");
pub const CLASS_ARMS: &str = include_str!("../corpus/class_arms.ssir");
pub const GROWTH_MIX: &str = include_str!("../corpus/growth_mix.ssir");
pub const LOOP_SUM: &str = include_str!("../corpus/loop_sum.ssir");
pub const NESTED_COND: &str = include_str!("../corpus/nested_cond.ssir");
pub const STRAIGHT: &str = include_str!("../corpus/straight.ssir");
pub const REACHING_USES: &str = include_str!("../corpus/reaching_uses.ssir");

pub fn all() -> Vec<(&'static str, &'static str)> {
    vec![
        ("diamond", DIAMOND),
        ("taint_echoes", TAINT_ECHOES),
        ("null_chain", NULL_CHAIN),
        ("class_arms", CLASS_ARMS),
        ("growth_mix", GROWTH_MIX),
        ("loop_sum", LOOP_SUM),
        ("nested_cond", NESTED_COND),
        ("straight", STRAIGHT),
        ("reaching_uses", REACHING_USES),
    ]
}
