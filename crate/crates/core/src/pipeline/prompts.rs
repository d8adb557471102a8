//! System prompts. The files under `prompts/` are kept verbatim; placeholders
//! are filled here.

use std::sync::OnceLock;

use regex::Regex;

pub const DRUG_FINDER: &str = include_str!("../../prompts/drug_finder.txt");
pub const DRUG_FINDER_CRITIC: &str = include_str!("../../prompts/drug_finder_critic.txt");
pub const DRUG_AGENT: &str = include_str!("../../prompts/drug_agent.txt");
pub const DRUG_AGENT_CRITIC: &str = include_str!("../../prompts/drug_agent_critic.txt");
pub const FDA_HANDLER: &str = include_str!("../../prompts/fda_handler.txt");
pub const FDA_BARE: &str = include_str!("../../prompts/fda_bare.txt");
pub const CATEGORY_AGENT: &str = include_str!("../../prompts/category_agent.txt");
pub const CATEGORY_AGENT_CRITIC: &str = include_str!("../../prompts/category_agent_critic.txt");

pub fn drug_finder(category: &str, n: usize) -> String {
    static N_RE: OnceLock<Regex> = OnceLock::new();
    let re = N_RE.get_or_init(|| Regex::new(r"\bN\b").expect("valid regex"));
    re.replace_all(&DRUG_FINDER.replace("{cat}", category), n.to_string().as_str())
        .into_owned()
}

pub fn drug_finder_critic(category: &str) -> String {
    DRUG_FINDER_CRITIC.replace("{cat}", category)
}

pub fn category_agent(category: &str, condition: &str) -> String {
    CATEGORY_AGENT
        .replace("{cat_name}", category)
        .replace("{condition}", condition)
}

/// Question put to a DrugAgent.
pub fn drug_question(drug: &str, outcome: &str) -> String {
    format!(
        "Does {} increase or decrease the risk of {outcome}?",
        drug.trim().to_uppercase()
    )
}

/// Question closing the CategoryAgent input.
pub fn category_question(category: &str, outcome: &str) -> String {
    format!(
        "Does the {category} category of drugs increase the risk of {outcome}, decrease it, or is there no clear effect?"
    )
}
