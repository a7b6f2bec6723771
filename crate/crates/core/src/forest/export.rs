use std::fmt::Write;

use super::{DecisionTree, Node, RandomForest};
use crate::labeler::Label;

pub const EXPORT_FUNCTION: &str = "classify_region";

/// Decimal literal that reads back as exactly `v`.
fn literal(v: f64) -> String {
    let s = format!("{}", v.abs());
    let s = if s.contains('.') { s } else { format!("{s}.0") };
    if v.is_sign_negative() && v != 0.0 {
        format!("-{s}")
    } else {
        s
    }
}

fn emit_tree(t: &DecisionTree, i: usize, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match &t.nodes[i] {
        Node::Leaf { label, .. } => {
            let var = match label {
                Label::Easy => "easy_votes",
                Label::Hard => "hard_votes",
            };
            writeln!(out, "{pad}{var} += 1;").unwrap();
        }
        Node::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            writeln!(out, "{pad}if (x[{feature}] <= {}) {{", literal(*threshold)).unwrap();
            emit_tree(t, *left, indent + 1, out);
            writeln!(out, "{pad}}} else {{").unwrap();
            emit_tree(t, *right, indent + 1, out);
            writeln!(out, "{pad}}}").unwrap();
        }
    }
}

/// Straight-line C for the forest's vote. Returns 1 for easy, 0 for hard.
pub fn export_decision_code(model: &RandomForest) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "/* random forest: {} trees over {} features */",
        model.trees.len(),
        model.width()
    )
    .unwrap();
    writeln!(out, "int {EXPORT_FUNCTION}(float x[{}]) {{", model.width()).unwrap();
    out.push_str("    int easy_votes, hard_votes;\n    easy_votes = 0;\n    hard_votes = 0;\n");
    for (i, t) in model.trees.iter().enumerate() {
        writeln!(out, "    /* tree {i} */").unwrap();
        emit_tree(t, 0, 1, &mut out);
    }
    out.push_str("    return easy_votes > hard_votes ? 1 : 0;\n}\n");
    out
}
