//! The four prompt templates and placeholder substitution.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Solution,
    TestGenerator,
    Validator,
    Selection,
}

impl PromptKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptKind::Solution => "solution",
            PromptKind::TestGenerator => "test_generator",
            PromptKind::Validator => "validator",
            PromptKind::Selection => "selection",
        }
    }

    pub fn template(&self) -> &'static str {
        match self {
            PromptKind::Solution => SOLUTION_TEMPLATE,
            PromptKind::TestGenerator => GENERATOR_TEMPLATE,
            PromptKind::Validator => VALIDATOR_TEMPLATE,
            PromptKind::Selection => SELECTION_TEMPLATE,
        }
    }
}

const SOLUTION_TEMPLATE: &str = "\
You are an expert competitive programmer. You will be given a problem statement, test case constraints and example test inputs and outputs. Please reason step by step about the solution, then provide a complete implementation in C++17. You should correctly implement the routine(s) described in Implementation Details, without reading or writing anything directly from stdin or to stdout, as input and output are passed through the implemented routines. Assume your code will be run on the OFFICIAL grader, and do not add a main function, a sample grader, or any other functionality unless it has been explicitly requested.

Put your final solution within a single code block:

```cpp
// your code here
```

{question}
";

const GENERATOR_TEMPLATE: &str = "\
You are an expert competitive programmer. You will be given a problem statement, its constraints, and example test cases.  Your task is to write a **test case generator** in C++17 that produces valid inputs for the problem, following the constraints and reflecting the variety suggested by the examples.

First, **reason step by step** about how to design the generator.

Then, provide the **final complete implementation** inside a single code block:

```cpp
// your code here
```

### Question:

{problem}

### Answer: (use the provided format with backticks)
";

const VALIDATOR_TEMPLATE: &str = "\
You are an expert competitive programmer. You will be given a problem statement, its input format, constraints, and examples. Your task is to write an **input validator** in C++17 that reads from stdin and checks that the input fully matches the spec and all constraints.

First, reason step by step about what must be validated.

Then, provide the **final complete implementation** inside a single code block:

```cpp
// your code here
```

The program should print \"passed\" if the input is valid, otherwise \"failed\" and a short error to stderr. It must also ensure no extra tokens remain.

### Question:

{problem}

### Answer: (use the provided format with backticks)
";

const SELECTION_TEMPLATE: &str = "\
You are an expert competitive programmer. You will be given a problem statement, its constraints, and two solutions.  Your task is to evaluate each solution's correctness based on the problem statement and its constraints and select the best solution.

First, **reason step by step** about each solution.

### Question:
{problem}

### Solution A
{code_A}

### Solution B
{code_B}

Finish your reasoning with exactly three lines, nothing else:
Score A: <0-10>
Score B: <0-10>
Judgment: [A]  or  Judgment: [B]
";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template `{template}` needs slot `{{{slot}}}`")]
pub struct TemplateError {
    pub template: &'static str,
    pub slot: String,
}

/// Placeholders are `{name}` with `name` an identifier; anything else in
/// braces is literal text.
fn placeholder_at(template: &str, open: usize) -> Option<(&str, usize)> {
    let rest = &template[open + 1..];
    let close = rest.find('}')?;
    let name = &rest[..close];
    let valid = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit());
    valid.then_some((name, open + 1 + close + 1))
}

/// Names of the placeholders a template requires, in order of appearance.
pub fn required_slots(kind: PromptKind) -> Vec<&'static str> {
    let t = kind.template();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = t[i..].find('{') {
        let open = i + off;
        match placeholder_at(t, open) {
            Some((name, end)) => {
                if !out.contains(&name) {
                    out.push(name);
                }
                i = end;
            }
            None => i = open + 1,
        }
    }
    out
}

/// Substitutes slot values verbatim in a single pass, so values that happen
/// to contain `{...}` are never re-expanded.
pub fn render_prompt(kind: PromptKind, slots: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let t = kind.template();
    let mut out = String::with_capacity(t.len() + slots.values().map(|v| v.len()).sum::<usize>());
    let mut i = 0;
    while let Some(off) = t[i..].find('{') {
        let open = i + off;
        out.push_str(&t[i..open]);
        match placeholder_at(t, open) {
            Some((name, end)) => {
                let value = slots.get(name).ok_or_else(|| TemplateError {
                    template: kind.as_str(),
                    slot: name.to_string(),
                })?;
                out.push_str(value);
                i = end;
            }
            None => {
                out.push('{');
                i = open + 1;
            }
        }
    }
    out.push_str(&t[i..]);
    Ok(out)
}

pub fn solution_prompt(statement: &str) -> String {
    render_prompt(PromptKind::Solution, &BTreeMap::from([("question", statement)]))
        .expect("solution template slots")
}

pub fn generator_prompt(statement: &str) -> String {
    render_prompt(PromptKind::TestGenerator, &BTreeMap::from([("problem", statement)]))
        .expect("generator template slots")
}

pub fn validator_prompt(statement: &str) -> String {
    render_prompt(PromptKind::Validator, &BTreeMap::from([("problem", statement)]))
        .expect("validator template slots")
}

pub fn selection_prompt(statement: &str, code_a: &str, code_b: &str) -> String {
    render_prompt(
        PromptKind::Selection,
        &BTreeMap::from([("problem", statement), ("code_A", code_a), ("code_B", code_b)]),
    )
    .expect("selection template slots")
}
