//! Deterministic text outline of an [`AtomicTree`], used inside prompts and
//! by `atomr inspect`.

use super::tree::{AtomicTree, Chain, ChainStatus};

/// Marker placed once in every chain that lost steps to the length budget.
pub const ELISION_MARKER: &str = "[...elided...]";

/// Minimum number of trailing active-chain steps kept under truncation.
const ACTIVE_KEEP: usize = 3;

struct Section {
    header: String,
    units: Vec<String>,
    dropped: usize,
    active: bool,
}

impl Section {
    fn write(&self, out: &mut String) {
        out.push_str(&self.header);
        if self.dropped > 0 {
            out.push_str(&format!(
                "{ELISION_MARKER} {} earlier item(s) omitted\n",
                self.dropped
            ));
        }
        for u in &self.units[self.dropped..] {
            out.push_str(u);
        }
    }
}

pub fn chain_label(chain: &Chain) -> String {
    format!("Chain {}", chain.id.0 + 1)
}

/// Renders the tree within `budget` characters.
///
/// Chains appear in creation order. Inactive chains with a summary are shown
/// by that summary; everything else node by node. When over budget, the
/// oldest items of inactive chains go first, then the active chain down to
/// its last three steps; a hard cut is the last resort.
pub fn render_tree(tree: &AtomicTree, budget: usize) -> String {
    let mut head = String::new();
    head.push_str("# Problem\n");
    head.push_str(&tree.problem().statement);
    head.push_str("\n\n");

    let mut sections: Vec<Section> = tree
        .chains()
        .iter()
        .map(|c| render_chain(tree, c))
        .collect();

    let assemble = |sections: &[Section]| {
        let mut out = head.clone();
        for s in sections {
            s.write(&mut out);
        }
        out
    };

    let mut out = assemble(&sections);
    while out.chars().count() > budget {
        let victim = sections
            .iter()
            .position(|s| !s.active && s.dropped < s.units.len())
            .or_else(|| {
                sections
                    .iter()
                    .position(|s| s.active && s.units.len() - s.dropped > ACTIVE_KEEP)
            });
        match victim {
            Some(i) => {
                sections[i].dropped += 1;
                out = assemble(&sections);
            }
            None => {
                out = out.chars().take(budget).collect();
                break;
            }
        }
    }
    out
}

fn render_chain(tree: &AtomicTree, chain: &Chain) -> Section {
    let mut header = format!("## {} [{}]", chain_label(chain), chain.status);
    if let Some(bp) = chain.parent {
        let parent = &tree.chains()[bp.chain.0 as usize];
        let step = tree.inherited_len(bp.chain) + bp.index + 1;
        header.push_str(&format!(
            " (branches from {} at Step {step})",
            chain_label(parent)
        ));
    }
    header.push('\n');

    let active = chain.status == ChainStatus::Active;
    let units = match (&chain.summary, active) {
        (Some(summary), false) => vec![format!("Summary: {summary}\n")],
        _ => chain
            .node_ids
            .iter()
            .filter_map(|id| tree.node(*id))
            .map(|n| {
                let step = tree.step_label(n.id).unwrap_or(0);
                let revised = if n.revised() { " (revised)" } else { "" };
                format!("### Step {step}: {}{revised}\n{}\n", n.action.label(), n.content.trim_end())
            })
            .collect(),
    };
    Section {
        header,
        units,
        dropped: 0,
        active,
    }
}
