use std::fmt::Write;

use super::{Outcome, TransitionKind, WfdNet};

/// Renders the net in the line format described in `docs/net-format.md`.
pub fn export_lines(net: &WfdNet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "net {}", net.name);
    for p in &net.places {
        let _ = writeln!(out, "place {}", p.name);
    }
    for d in &net.data {
        let _ = writeln!(out, "data {d}");
    }
    for t in &net.transitions {
        let kind = match t.kind {
            TransitionKind::Coordinator => "coordinator",
            TransitionKind::Function => "function",
        };
        let _ = write!(out, "transition {} {kind}", t.name);
        if let Some(phase) = &t.phase {
            let _ = write!(out, " phase={phase}");
        }
        if let Some(slot) = &t.slot {
            let _ = write!(out, " slot={}.{}", slot.slot, slot.step);
        }
        match t.outcome {
            Some(Outcome::Success) => out.push_str(" outcome=success"),
            Some(Outcome::Failure) => out.push_str(" outcome=failure"),
            None => {}
        }
        if let Some(g) = &t.guard {
            let _ = write!(out, " guard=[{g}]");
        }
        out.push('\n');
        for (label, set) in [("read", &t.reads), ("write", &t.writes), ("destroy", &t.destroys)] {
            for d in set {
                let _ = writeln!(out, "{label} {} {d}", t.name);
            }
        }
    }
    for (a, b) in &net.arcs {
        let _ = writeln!(out, "arc {} {}", net.node_name(*a), net.node_name(*b));
    }
    for b in &net.boundaries {
        let _ = writeln!(
            out,
            "boundary {} {} {}",
            b.from.as_deref().unwrap_or("^"),
            b.to.as_deref().unwrap_or("$"),
            b.coordinator.map(|c| net.transitions[c.0 as usize].name.as_str()).unwrap_or("-")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_every_node_and_arc() {
        let net = crate::net::tests::example_net();
        let text = export_lines(&net);
        assert!(text.starts_with("net example\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("place ")).count(), 6);
        assert_eq!(text.lines().filter(|l| l.starts_with("arc ")).count(), 10);
        assert!(text.contains("transition t1 coordinator\n"));
        assert!(text.contains("arc start t1\n"));
    }
}
