//! Aligned text rendering of a result table: one line per (task, strategy),
//! one column per (train domain → test domain), cells as
//! `accuracy% ± std% (auc)`.

use crate::grid::ResultTable;

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

pub fn format_cell(mean_acc: f64, std_acc: f64, mean_auc: f64) -> String {
    format!("{:.2} ± {:.2} ({:.2})", 100.0 * mean_acc, 100.0 * std_acc, mean_auc)
}

pub fn render(table: &ResultTable) -> String {
    let columns = first_seen(
        table
            .rows
            .iter()
            .map(|r| (r.train_domain.clone(), r.test_domain.clone())),
    );
    let tasks = first_seen(table.rows.iter().map(|r| (r.n_way, r.k_shot)));
    let strategies = first_seen(table.rows.iter().map(|r| r.strategy.clone()));

    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["task".to_string(), "strategy".to_string()];
    header.extend(
        columns
            .iter()
            .map(|(a, b)| if a == b { a.clone() } else { format!("{a} → {b}") }),
    );
    grid.push(header);
    for &(n_way, k_shot) in &tasks {
        for strategy in &strategies {
            let mut line = vec![format!("{n_way}-way {k_shot}-shot"), strategy.clone()];
            let mut any = false;
            for (train, test) in &columns {
                let cell = table.rows.iter().find(|r| {
                    r.n_way == n_way
                        && r.k_shot == k_shot
                        && &r.strategy == strategy
                        && &r.train_domain == train
                        && &r.test_domain == test
                });
                line.push(match cell {
                    Some(r) => {
                        any = true;
                        format_cell(r.mean_acc, r.std_acc, r.mean_auc)
                    }
                    None => "-".to_string(),
                });
            }
            if any {
                grid.push(line);
            }
        }
    }

    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, line) in grid.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(rule));
            out.push('\n');
        }
    }
    out
}
