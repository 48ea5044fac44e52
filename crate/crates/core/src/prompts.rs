//! Prompt and instruction templates.
//!
//! Every template is a constant with `{name}` placeholders, filled in one
//! pass so that substituted text is never re-scanned. Options render as one
//! `A. text` line per choice.

use std::collections::BTreeMap;

use crate::choice::Letter;
use crate::corpus::{Domain, McqItem};
use crate::util::sha256_hex;

/// Header shared by the probing prompt and the vanilla instruction.
pub const MCQ_HEADER: &str =
    "The following are multiple choice questions about {domain}. Please choose the correct answer.";

/// One solved demonstration inside a few-shot probing prompt.
pub const PROBE_DEMO: &str = "{question}\n{options}\nAnswer:{answer}\n\n";

/// Target question closing a probing prompt.
pub const PROBE_TARGET: &str = "{question}\n{options}\nAnswer:";

pub const VANILLA_INSTRUCTION: &str = "{header}\n\n{question}\n{options}";

pub const VANILLA_OUTPUT: &str = "{answer}\nExplanation: {explanation}";

/// Chat-style prompt asking a base model to justify its own answer.
pub const BASE_EXPLANATION_PROMPT: &str = r##"# Instruction

Below is a list of conversations between a human and an AI assistant (you).
Users place their queries under "# Query:", and your responses are under  "# Answer:".
You are a helpful, respectful, and honest assistant.
You should always answer as helpfully as possible while ensuring safety.
Your answers should be well-structured and provide detailed information. They should also have an engaging tone.
Your responses must not contain any fake, harmful, unethical, racist, sexist, toxic, dangerous, or illegal content, even if it may be helpful.
Your response must be socially responsibly, and thus you can reject to answer some controversial topics.

# Query:
```
Can you tell me some common types of renewable energy sources?
```

# Answer:
```
Absolutely, below are some of the most common types of renewable energy sources:

1. Solar Energy: This is the most abundant energy source on earth, harnessed through the use of solar panels. These panels convert sunlight into electricity without any moving parts, noise, pollution, or damage to the environment.
2. Wind Energy: Wind turbines convert the kinetic energy in the wind into mechanical power. This mechanical power can be used for specific tasks (such as pumping water) or converted into electricity to power homes, businesses, and schools.
3. Hydropower: Generated by using electricity generators to capture the energy from falling or fast-moving water. This renewable source can come from various ways, including a large dam on a river, tidal or wave energy from the ocean, or using small scale turbines in streams.
4. Geothermal Energy: This type of energy is generated from the heat deep within the Earth. This heat can be used directly for heating buildings or to generate electricity. It is continuously produced inside the Earth and is nearly as reliable as the tides.
5. Biomass Energy: Biomass is organic material that comes from plants and animals, and it contains stored energy from the sun. This energy can be burned directly or converted into biofuel which can burn more efficiently.

Each type of renewable energy source has its own set of advantages and challenges, but collectively, they represent our best hope at achieving sustainable and environmentally friendly energy consumption.
```

# Query:
```
Below is a multiple-choice question and the answer. Please give the explanation.
Question: {question}
Choices: {options}
Answer: {answer}
```

# Answer:
"##;

/// Prompt asking an external model to explain a gold answer.
pub const EXTERNAL_EXPLANATION_PROMPT: &str = "The following is a multi choice question about {domain}.\n\n{question}\n{options}\n\nThe answer is \"{answer}\". Please explain why.";

/// Prompt asking for self-contained evidence supporting an answer.
pub const EVIDENCE_PROMPT: &str = "Given a multi-choice question and the answer, please write a short piece of evidence to support it so that a layman who has read the evidence you give can answer the question correctly.\nIf your response contains words \"listed\", \"option\" or \"choice\" like \"among the listed/given options', you will be penalized.\n\nQuestion:\n{question}\n{options}\n\nAnswer:\n{answer}\n\nEvidence:\n";

pub const CONTEXTUALIZED_INSTRUCTION: &str = "The following are multiple choice questions about {domain}. Given the context. Please choose the correct answer.\n\n{context}\n{question}\n{options}";

/// Words whose presence in generated evidence triggers regeneration.
pub const EVIDENCE_BANNED_WORDS: [&str; 3] = ["listed", "option", "choice"];

/// Stop sequences for base-model explanation completions.
pub const BASE_EXPLANATION_STOPS: [&str; 2] = ["# Query:", "\n```"];

/// Replaces `{name}` placeholders in one left-to-right pass. Unknown
/// placeholders are left as written.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_options(item: &McqItem) -> String {
    item.letters()
        .into_iter()
        .zip(&item.choices)
        .map(|(l, text)| format!("{l}. {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn header(domain: &Domain) -> String {
    fill(MCQ_HEADER, &[("domain", &domain.display_name())])
}

/// Few-shot probing prompt: header, each demonstration with its gold answer,
/// then the target question ending in a bare `Answer:`.
pub fn probe_prompt(item: &McqItem, demos: &[McqItem], domain: &Domain) -> String {
    let mut out = header(domain);
    out.push_str("\n\n");
    for demo in demos {
        out.push_str(&fill(
            PROBE_DEMO,
            &[
                ("question", &demo.question),
                ("options", &render_options(demo)),
                ("answer", &demo.gold.to_string()),
            ],
        ));
    }
    out.push_str(&fill(
        PROBE_TARGET,
        &[("question", &item.question), ("options", &render_options(item))],
    ));
    out
}

/// Instruction half of a vanilla training pair.
pub fn vanilla_instruction(item: &McqItem) -> String {
    fill(
        VANILLA_INSTRUCTION,
        &[
            ("header", &header(&item.domain)),
            ("question", &item.question),
            ("options", &render_options(item)),
        ],
    )
}

pub fn vanilla_output(answer: Letter, explanation: &str) -> String {
    fill(
        VANILLA_OUTPUT,
        &[("answer", &answer.to_string()), ("explanation", explanation)],
    )
}

pub fn base_explanation_prompt(item: &McqItem, answer: Letter) -> String {
    fill(
        BASE_EXPLANATION_PROMPT,
        &[
            ("question", &item.question),
            ("options", &render_options(item)),
            ("answer", &answer.to_string()),
        ],
    )
}

pub fn external_explanation_prompt(item: &McqItem, answer: Letter) -> String {
    fill(
        EXTERNAL_EXPLANATION_PROMPT,
        &[
            ("domain", &item.domain.display_name()),
            ("question", &item.question),
            ("options", &render_options(item)),
            ("answer", &answer.to_string()),
        ],
    )
}

pub fn evidence_prompt(item: &McqItem, answer: Letter) -> String {
    fill(
        EVIDENCE_PROMPT,
        &[
            ("question", &item.question),
            ("options", &render_options(item)),
            ("answer", &answer.to_string()),
        ],
    )
}

pub fn contextualized_instruction(item: &McqItem, context: &str) -> String {
    fill(
        CONTEXTUALIZED_INSTRUCTION,
        &[
            ("domain", &item.domain.display_name()),
            ("context", context),
            ("question", &item.question),
            ("options", &render_options(item)),
        ],
    )
}

/// First banned word found in `text`, compared case-insensitively.
pub fn banned_word(text: &str) -> Option<&'static str> {
    let lower = text.to_lowercase();
    EVIDENCE_BANNED_WORDS
        .into_iter()
        .find(|w| lower.contains(w))
}

/// SHA-256 of every template, keyed by template name.
pub fn template_hashes() -> BTreeMap<String, String> {
    [
        ("mcq_header", MCQ_HEADER),
        ("probe_demo", PROBE_DEMO),
        ("probe_target", PROBE_TARGET),
        ("vanilla_instruction", VANILLA_INSTRUCTION),
        ("vanilla_output", VANILLA_OUTPUT),
        ("base_explanation", BASE_EXPLANATION_PROMPT),
        ("external_explanation", EXTERNAL_EXPLANATION_PROMPT),
        ("evidence", EVIDENCE_PROMPT),
        ("contextualized_instruction", CONTEXTUALIZED_INSTRUCTION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), sha256_hex(v)))
    .collect()
}

/// Recovers the question text of the final (target) block of a probing or
/// zero-shot prompt: the text between the last blank line and the first
/// `A. ` option line after it.
pub fn target_question(prompt: &str) -> Option<&str> {
    let block = match prompt.rfind("\n\n") {
        Some(i) => &prompt[i + 2..],
        None => prompt,
    };
    let end = block.find("\nA. ")?;
    Some(&block[..end])
}

/// Number of solved demonstrations in a probing prompt.
pub fn demo_count(prompt: &str) -> usize {
    prompt.matches("\nAnswer:").count().saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_item;

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("{a}-{b}", &[("a", "{b}"), ("b", "x")]), "{b}-x");
        assert_eq!(fill("{zzz} {", &[]), "{zzz} {");
    }

    #[test]
    fn zero_shot_prompt_is_vanilla_instruction_plus_answer_cue() {
        let item = test_item("q1", Domain::History, 4, 'C');
        let zero = probe_prompt(&item, &[], &item.domain);
        assert_eq!(zero, format!("{}\nAnswer:", vanilla_instruction(&item)));
        assert!(zero.starts_with(
            "The following are multiple choice questions about history. Please choose the correct answer.\n\n"
        ));
    }

    #[test]
    fn target_question_skips_demonstrations() {
        let demo = test_item("d1", Domain::History, 4, 'A');
        let item = test_item("q17", Domain::History, 4, 'B');
        let p = probe_prompt(&item, &[demo.clone(), demo], &Domain::History);
        assert_eq!(target_question(&p), Some("Question q17?"));
        assert_eq!(demo_count(&p), 2);
        assert_eq!(demo_count(&probe_prompt(&item, &[], &Domain::History)), 0);
    }

    #[test]
    fn banned_words_case_insensitive() {
        assert_eq!(banned_word("Among the OPTIONS given"), Some("option"));
        assert_eq!(banned_word("The Choice is clear"), Some("choice"));
        assert_eq!(banned_word("Iron smelting began later."), None);
    }

    #[test]
    fn template_hashes_cover_all_templates() {
        let h = template_hashes();
        assert_eq!(h.len(), 9);
        assert!(h.values().all(|v| v.len() == 64));
    }
}
