//! Prompt templates, their frozen expression embeddings, and the Gaussian
//! mixture that picks a template per edge.

pub mod gmm;
pub mod gtheta;
pub mod template;

pub use gmm::{
    em_fit, init_gmm_from_labeled, init_gmm_from_seed, log_likelihood, log_mixture_density,
    m_step, responsibilities, select_from_candidates, select_template, sharpen, GmmState,
};
pub use gtheta::{embed_expression, embed_tokens};
pub use template::{
    edge_tokens, load_rule_base, load_seed_labels, save_rule_base, save_seed_labels, verbalize,
    Direction, PromptRuleBase, PromptTemplate, SeedLabel,
};
