//! Deterministic offline thoughts. Each is a function of the environment,
//! the situation key and the prompt text only, so a template thought is a
//! valid situation-keyed cache entry.

use crate::env::SituationId;

const STEP_QUESTION: &str = "How do you choose a step?";

const OVERCOOKED_LETTUCE: &str = "task_queue = []\n# Step 1: Fetch a lettuce\ntask_queue.append((agent1.fetch, \"lettuce\"))\n# Step 2: Put the lettuce onto the cutboard (assuming cutboard0 is available)\ntask_queue.append((agent1.put_onto, \"cutboard0\"))\n# Step 3: Slice the lettuce on the cutboard\ntask_queue.append((agent1.slice_on, \"cutboard0\"))";

const OVERCOOKED_TOMATO: &str = "task_queue = []\n# Step 1: Fetch a tomato\ntask_queue.append((agent1.fetch, \"tomato\"))\n# Step 2: Put the tomato onto the cutboard (assuming cutboard0 is available)\ntask_queue.append((agent1.put_onto, \"cutboard0\"))\n# Step 3: Slice the tomato on the cutboard\ntask_queue.append((agent1.slice_on, \"cutboard0\"))";

const OVERCOOKED_SALAD: &str = "task_queue = []\n# Step 1: Fetch a plate (choose either plate0 or plate1)\ntask_queue.append((agent1.fetch, \"plate0\"))\n# Step 2: Put the sliced lettuce onto the plate\ntask_queue.append((agent1.put_onto, \"plate0\"))\n# Step 3: Fetch the sliced tomato\ntask_queue.append((agent1.fetch, \"tomato\"))\n# Step 4: Put the sliced tomato onto the plate\ntask_queue.append((agent1.put_onto, \"plate0\"))\n# Step 5: Deliver the lettuce-tomato salad\ntask_queue.append((agent1.deliver, None))";

fn has_word(text: &str, word: &str) -> bool {
    text.split(|c: char| !c.is_ascii_alphanumeric() && c != '-')
        .any(|w| w.eq_ignore_ascii_case(word))
}

fn chainworld(prompt: &str) -> String {
    let p = prompt.to_ascii_lowercase();
    if p.contains("reach position 9") {
        return "To maximize the reward, consider taking the optimal sequence of go right actions."
            .into();
    }
    if p.contains("avoid position 0") {
        return "At position X, avoid go left toward -5, balance with go right to reach 100."
            .into();
    }
    match (has_word(&p, "left"), has_word(&p, "right")) {
        (true, false) => "The 100 points wait at the left end, position 0. Every step should go left \
                          until the chain ends."
            .into(),
        (false, true) => "The 100 points wait at the right end, position 9. Every step should go right \
                          until the chain ends."
            .into(),
        _ => "Either end of the chain may hold the 100 points. Weigh what the past moves revealed before \
              committing to a direction."
            .into(),
    }
}

fn fourroom(prompt: &str) -> String {
    let p = prompt.to_ascii_lowercase();
    let hallway = p.contains("hallway between");
    let side = if p.contains("left-handed") {
        Some("left-handed")
    } else if p.contains("right-handed") {
        Some("right-handed")
    } else {
        None
    };
    match (hallway, side) {
        (true, Some(side)) => format!(
            "You in hallway. Goal is not in current hallway. Go to the {side} room entrance. {STEP_QUESTION}"
        ),
        (false, Some(side)) => format!(
            "Goal is not in current room. To move through different rooms, you can only go through \
             hallways. Enter the {side} hallway. {STEP_QUESTION}"
        ),
        _ if p.contains("same room") => format!(
            "Goal is in current room. No hallway is needed. Move straight toward the goal's position. \
             {STEP_QUESTION}"
        ),
        _ => format!("Compare your position with the goal's position and pick the room to head for. {STEP_QUESTION}"),
    }
}

fn overcooked(prompt: &str) -> Option<&'static str> {
    let p = prompt.to_ascii_lowercase();
    if p.contains("salad") {
        Some(OVERCOOKED_SALAD)
    } else if p.contains("sliced lettuce") {
        Some(OVERCOOKED_LETTUCE)
    } else if p.contains("sliced tomato") {
        Some(OVERCOOKED_TOMATO)
    } else {
        None
    }
}

/// Template thought for `env` (an environment name such as "chainworld").
pub fn template_thought(env: &str, situation: &SituationId, prompt: &str) -> String {
    match env {
        "chainworld" => chainworld(prompt),
        "fourroom" => fourroom(prompt),
        "overcooked" => match overcooked(prompt) {
            Some(t) => t.to_string(),
            None => generic(situation, prompt),
        },
        _ => generic(situation, prompt),
    }
}

fn generic(situation: &SituationId, prompt: &str) -> String {
    format!("Situation: {situation}. Instruction: {prompt} Work out the next action step by step.")
}
