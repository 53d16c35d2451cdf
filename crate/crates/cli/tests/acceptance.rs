use roughkit_cli::selftest::{run_criterion, SelftestConfig, CRITERIA};

fn main() {
    let cfg = SelftestConfig::default();
    let only: Option<Vec<u32>> = std::env::var("ROUGHKIT_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, title, budget) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let c = run_criterion(id, &cfg);
        let in_budget = c.seconds <= budget;
        let ok = c.pass && in_budget;
        println!(
            "[{}] criterion {id}: {title} ({:.1}s, budget {budget}s)",
            if ok { "PASS" } else { "FAIL" },
            c.seconds
        );
        ran += 1;
        if !ok {
            for line in c.failures() {
                println!("  {line}");
            }
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {ran} criteria passed");
}
