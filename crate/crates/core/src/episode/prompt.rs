use crate::graph::GraphId;

const PLACEHOLDER: &str = "{{ graph_type }}";

const TOOLS_TEMPLATE: &str = r#"<tools>
{"type": "function", "function": {"name": "entity_matcher", "description": "A tool that Finds entities in the knowledge graph that match or are similar to your query", "parameters": {"type": "object", "properties": {"node_name": {"type": "string", "description": "The entity or concept you want to search for (e.g., `crop diseases`, `legal precedent`)"}, "graph_type": {"type": "string", "description": "Type of knowledge graph to query, must be `{{ graph_type }}` for this question", "enum": ["{{ graph_type }}"]}}, "required": ["node_name", "graph_type"]}}}
{"type": "function", "function": {"name": "node_info", "description": "A tool that retrieves detailed information about a specific entity and its relationships", "parameters": {"type": "object", "properties": {"node_name": {"type": "string", "description": "The exact entity name (use names returned by entity_matcher)"}, "graph_type": {"type": "string", "description": "Type of knowledge graph to query, must be `{{ graph_type }}` for this question", "enum": ["{{ graph_type }}"]}}, "required": ["node_name", "graph_type"]}}}
</tools>"#;

const SYSTEM_HEAD: &str = "Answer the given question using knowledge graph tools.
You should use an iterative process of reasoning and tool usage to solve the problem. For each step:

1. First, think about what you know and what information you need by writing your thoughts inside <think> and </think> tags.
2. You can only use one tool at a time
3. After receiving tool results, think again about what you've learned and what to do next
4. Repeat this process of thinking and searching until you have enough information to answer the question.
5. When you have enough information to answer the question, represent your final answer between <answer> and </answer> tag.

# Tools

You can call only one function at one time to assist with the user query. You are provided with function signatures within <tools> and </tools> XML tags:

";

const SYSTEM_TAIL: &str = r#"

For each function call, return the call in Python function-call style within <tool_call></tool_call> tags, for example:
<tool_call>node_info(node_name="Rastrigin Function", graph_type="cs")
</tool_call>"#;

/// The `<tools>...</tools>` block with both tool schemas bound to `graph_type`.
pub fn tools_block(graph_type: &GraphId) -> String {
    // JSON-escape the id so odd names cannot break the schema
    let quoted = serde_json::to_string(graph_type.as_str()).expect("string serializes");
    TOOLS_TEMPLATE.replace(PLACEHOLDER, &quoted[1..quoted.len() - 1])
}

/// System prompt for one episode on `graph_type`.
pub fn build_system_prompt(graph_type: &GraphId) -> String {
    format!("{SYSTEM_HEAD}{}{SYSTEM_TAIL}", tools_block(graph_type))
}
