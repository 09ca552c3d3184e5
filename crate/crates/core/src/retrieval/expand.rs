use crate::pinyin::{syllable_distance, FuzzyCostTable, Syllable, SyllableInventory};

/// Options for one syllable: the original and each single-component fuzzy
/// variant, with the number of components changed.
fn syllable_options(
    s: &Syllable,
    costs: &FuzzyCostTable,
    inventory: &SyllableInventory,
) -> Vec<(Syllable, usize)> {
    let mut initials = vec![(s.initial, 0usize)];
    initials.extend(costs.initial_neighbors(s.initial).map(|(i, _)| (i, 1)));
    let mut finals = vec![(s.rime, 0usize)];
    finals.extend(costs.final_neighbors(s.rime).map(|(f, _)| (f, 1)));

    let mut out = Vec::new();
    for &(ini, a) in &initials {
        for &(fin, b) in &finals {
            let Ok(variant) = inventory.parse_syllable(&format!("{ini}{fin}{}", s.tone)) else {
                continue;
            };
            // greedy parsing must give back the same split
            if variant.initial == ini && variant.rime == fin && !out.iter().any(|(v, _)| *v == variant) {
                out.push((variant, a + b));
            }
        }
    }
    out
}

/// All syllable sequences reachable from `syllables` by at most `budget`
/// fuzzy substitutions of an initial or final, keeping only valid syllables.
/// Each variant carries its positionwise fuzzy distance from the input. The
/// identity comes first; the rest are ordered by distance, then by sequence.
pub fn fuzzy_expand(
    syllables: &[Syllable],
    budget: usize,
    costs: &FuzzyCostTable,
    inventory: &SyllableInventory,
) -> Vec<(Vec<Syllable>, f64)> {
    let options: Vec<Vec<(Syllable, usize)>> = syllables
        .iter()
        .map(|s| syllable_options(s, costs, inventory))
        .collect();

    let mut out = Vec::new();
    let mut current = Vec::with_capacity(syllables.len());
    fn walk(
        options: &[Vec<(Syllable, usize)>],
        budget: usize,
        current: &mut Vec<Syllable>,
        out: &mut Vec<Vec<Syllable>>,
    ) {
        let i = current.len();
        if i == options.len() {
            out.push(current.clone());
            return;
        }
        for &(s, used) in &options[i] {
            if used <= budget {
                current.push(s);
                walk(options, budget - used, current, out);
                current.pop();
            }
        }
    }
    walk(&options, budget, &mut current, &mut out);

    let mut scored: Vec<(Vec<Syllable>, f64)> = out
        .into_iter()
        .map(|v| {
            let d = v
                .iter()
                .zip(syllables)
                .map(|(a, b)| syllable_distance(a, b, costs))
                .sum();
            (v, d)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored
}
