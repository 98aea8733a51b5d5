//! Runs a small batch through the command-line front end: a plan file with one job
//! per line, each writing its own CSV.

use std::fs;

fn main() {
    let dir = std::env::temp_dir().join("optocat-sweep-example");
    fs::create_dir_all(&dir).expect("create output directory");
    let plan = dir.join("plan.txt");
    fs::write(
        &plan,
        "# name subcommand flags\n\
         star marginal-star --gamma 0.02 --x-step 0.05\n\
         cond marginal-cond --t 1.5xpi --y 0.3 --x-step 0.05\n\
         corr correlation --t-max 2x2pi --t-step 0.1\n\
         times cat-times --m-max 3\n",
    )
    .expect("write plan");
    let argv: Vec<String> = ["optocat", "sweep", "--plan", plan.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let code = optocat::cli::run_from(&argv);
    println!("sweep exit code {code}");
    for name in ["star", "cond", "corr", "times"] {
        let text = fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap_or_default();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        println!("{name}.csv: {rows} lines");
    }
}
