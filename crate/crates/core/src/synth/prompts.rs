use super::{GenerationFeedback, HopCategory};
use crate::graph::PathSpec;

const ONE_TWO_BODY: &str = "\
The above is a knowledge graph where the relation between the entities are listed.

Your need to determine a path in the knowledge graph first, and the path should be suitable for generating a one-hop or two-hop question.
The suitable path should be:
The language of the one/two hop question will be natural.
The answer will be unique, only one node in the knowledge graph corresponds to the correct answer.
The length of the path is 2 or 3, which corresponds to one-hop and two-hop questions.

Then you need to generate a one/two hop question from the path. You should not reveal the answer node name but need to provide the starting node name(s) for the answerer to start with. Use natural language to describe the relation between the nodes.

Here are some two-hop question types as hint:
1. Inferring the bridge entity to complete the 2nd-hop question
Which team does the player named 2015 Diamond Head Classic's MVP play for?
2. Locating the answer entity by checking multiple properties
Which former member of the Pittsburgh Pirates was nicknamed \"The Cobra\"?
3. Inferring about the property of an entity in question through a bridge entity
What city is the Marine Air Control Group 28 located in?
";

const ONE_TWO_TAIL: &str = "\
Output in English.

Output in JSON format only, don't add markdown code delimiter or anything else, only a valid json object:
{\"path\": [node_name1, node_name2, ...], \"question\": \"question\", \"answer\": the answer node name}";

const THREE_PLUS_BODY: &str = "\
Given the knowledge graph above, identify one path that is suitable for generating a multi-hop question. A suitable path should meet the following criteria:
The resulting question should be natural and fluent in language (not awkward or difficult to read).
The answer should be unique and unambiguous.
The path length should be at least 4.

Once such a path is selected, generate a multi-hop question based on it. The question must follow these constraints:
Only the name of the start node or end node in the path may be explicitly mentioned. The names of the intermediate nodes must not be revealed, as doing so would reduce the difficulty of the question.
The relationships between each pair of connected nodes should be described using natural language.
Formulate one comprehensive multi-hop question, rather than multiple smaller sub-questions.
";

const THREE_PLUS_TAIL: &str = "\
Output in English.

Output in JSON format only, do not add markdown code delimiter or anything else, only a valid json object:
{\"path\": [node_name1, node_name2, node_name3, node_name4, ...], \"question\": \"question\", \"answer\": the answer node name}";

const JUDGE_HEAD: &str = "\
You will see a path from knowledge graph and a corresponding multi-hop question. Your task is to check if the question satisfies all the following requirements:

The question contains the name of the node explicitly so that the answerer knows where to search from in the knowledge graph.
The question only reveals the name of node to start from, but hide the name of the other nodes in the path.
The question is a multi-hop question.

If the question satisfies all the requirements, the question is valid, otherwise it is invalid.

Here is the real data:
";

const JUDGE_TAIL: &str = "\
Output in JSON format only, don't add markdown code delimiter or anything else, only a valid json object:
{\"valid\": true or false, \"reason\": \"your reason\"}";

/// Python `repr` of a string: single quotes unless the text contains a single
/// quote and no double quote.
pub fn py_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python `repr` of a list of strings, e.g. `['A', 'B']`.
pub fn py_list_repr(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| py_str_repr(s)).collect();
    format!("[{}]", inner.join(", "))
}

fn feedback_block(fb: &GenerationFeedback) -> String {
    format!(
        "These are the path and questions generated before but they are not good enough.\n\
         previous path: {}\n\
         previous question: {}\n\
         This is the feedback\n\
         path validity: {}\n\
         question feedback: {}\n\
         You need to provide a better question and/or path and fix the previous issues.\n",
        py_list_repr(&fb.previous_path),
        fb.previous_question,
        if fb.path_valid { "True" } else { "False" },
        fb.question_feedback,
    )
}

pub fn build_generation_prompt(
    relations_text: &str,
    hop_category: HopCategory,
    feedback: Option<&GenerationFeedback>,
) -> String {
    let (body, tail) = match hop_category {
        HopCategory::OneTwo => (ONE_TWO_BODY, ONE_TWO_TAIL),
        HopCategory::ThreePlus => (THREE_PLUS_BODY, THREE_PLUS_TAIL),
    };
    let mut out = format!("Relations(entity_1 - entity_2: the relation):\n```\n{relations_text}\n```\n\n{body}\n");
    if let Some(fb) = feedback {
        out.push_str(&feedback_block(fb));
        out.push('\n');
    }
    out.push_str(tail);
    out
}

pub fn build_judge_prompt(path: &PathSpec, question: &str) -> String {
    format!(
        "{JUDGE_HEAD}Path: {}\nMulti-hop question: {question}\n\n{JUDGE_TAIL}",
        py_list_repr(path.nodes())
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb(valid: bool) -> GenerationFeedback {
        GenerationFeedback {
            previous_path: vec!["Corboy".into(), "Beehives".into(), "Greensgrow".into()],
            previous_question: "Which farm?".into(),
            path_valid: valid,
            question_feedback: "The question reveals 'Beehives'.".into(),
        }
    }

    #[test]
    fn templates() {
        let p = build_generation_prompt("A - B: r", HopCategory::OneTwo, None);
        assert!(p.contains("one-hop and two-hop questions"));
        assert!(p.contains("A - B: r"));
        assert!(p.contains("Marine Air Control Group 28"));
        assert!(!p.contains("previous path:"));
        let p = build_generation_prompt("A - B: r", HopCategory::ThreePlus, None);
        assert!(p.contains("at least 4"));
        assert!(!p.contains("two-hop question types"));
    }

    #[test]
    fn feedback_inserted() {
        let p = build_generation_prompt("x", HopCategory::OneTwo, Some(&fb(true)));
        assert!(p.contains("previous path: ['Corboy', 'Beehives', 'Greensgrow']"));
        assert!(p.contains("question feedback: The question reveals 'Beehives'."));
        assert!(p.contains("path validity: True"));
        let p = build_generation_prompt("x", HopCategory::ThreePlus, Some(&fb(false)));
        assert!(p.contains("path validity: False"));
        assert!(p.find("previous path:").unwrap() < p.find("Output in English.").unwrap());
    }

    #[test]
    fn python_repr() {
        assert_eq!(py_str_repr("abc"), "'abc'");
        assert_eq!(py_str_repr("it's"), "\"it's\"");
        assert_eq!(py_str_repr("a'b\"c"), "'a\\'b\"c'");
        assert_eq!(py_str_repr("back\\slash"), "'back\\\\slash'");
        assert_eq!(py_list_repr(&[]), "[]");
    }

    #[test]
    fn judge_prompt() {
        let path = PathSpec::new(vec!["Miller".into(), "North Dakota".into()]).unwrap();
        let p = build_judge_prompt(&path, "Where?");
        assert!(p.contains("Path: ['Miller', 'North Dakota']\nMulti-hop question: Where?"));
        assert!(p.contains("hide the name of the other nodes"));
        assert!(p.ends_with("\"reason\": \"your reason\"}"));
    }
}
