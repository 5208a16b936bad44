use riskbudget::solve;

use crate::cli::SolveArgs;
use crate::error::CliResult;
use crate::problem::Scenario;
use crate::report::ResultDocument;

pub fn document(scenario: &Scenario) -> CliResult<ResultDocument> {
    let report = solve(&scenario.problem, &scenario.options)?;
    Ok(ResultDocument::new(
        scenario.file.name.as_deref(),
        &scenario.names,
        &report,
        scenario.reference.as_ref(),
    ))
}

pub fn run(args: &SolveArgs) -> CliResult<String> {
    let mut scenario = Scenario::load(&args.problem)?;
    scenario.apply(&args.solver.overrides())?;
    let doc = document(&scenario)?;
    if args.json {
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    } else {
        Ok(doc.table())
    }
}
