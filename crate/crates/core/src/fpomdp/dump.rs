use std::fmt::Write;

use super::{ActionId, FactoredPomdp, StateVector};

fn state(s: &StateVector) -> String {
    s.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn num(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

/// Line-oriented text dump of an environment over its reachable states.
///
/// ```text
/// env <name> <variant>
/// horizon <n>
/// var <index> <name> <domain>
/// action <index> <label>
/// init <state>,<p>
/// O <state> -> <var>=<value> ...
/// terminal <state>
/// T <state>,<action> -> <state>,<p> r=<reward>
/// R <state>,<action> = <expected reward>
/// ```
pub fn dump_env(env: &FactoredPomdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "env {} {}", env.name(), env.variant());
    let _ = writeln!(out, "horizon {}", env.horizon());
    for v in env.variables() {
        let _ = writeln!(out, "var {} {} {}", v.index, v.name, v.domain);
    }
    for (i, a) in env.actions().iter().enumerate() {
        let _ = writeln!(out, "action {i} {a}");
    }
    for (s, p) in env.initial() {
        let _ = writeln!(out, "init {},{}", state(s), num(*p));
    }
    for s in env.reachable_states() {
        let obs = env.observe(&s);
        let vis: Vec<String> = obs
            .visible
            .iter()
            .map(|(v, x)| format!("{}={x}", env.variables()[*v].name))
            .collect();
        let _ = writeln!(out, "O {} -> {}", state(&s), vis.join(" "));
        if env.is_terminal(&s) {
            let _ = writeln!(out, "terminal {}", state(&s));
            continue;
        }
        for a in 0..env.num_actions() {
            let label = env.action_label(ActionId(a));
            for o in env.outcomes(&s, ActionId(a)) {
                let _ = writeln!(
                    out,
                    "T {},{label} -> {},{} r={}",
                    state(&s),
                    state(&o.next),
                    num(o.prob),
                    num(o.reward)
                );
            }
            let _ = writeln!(out, "R {},{label} = {}", state(&s), num(env.reward(&s, ActionId(a))));
        }
    }
    out
}
