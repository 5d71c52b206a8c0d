//! Deterministic offline provider.
//!
//! Replies are a pure function of `(seed, schema, prompt)`. The mock reads
//! the tagged input blocks the built-in templates emit (`<seed>`,
//! `<characters>`, ...) and the `key: <json>` lines of rendered scene
//! prompts, so its output always agrees with what it was asked for.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::digest;
use crate::link;
use crate::schema::{LocationOut, PersonaOut, SchemaId, IDEA_COUNT};

use super::{Modality, Provider, ProviderCall, ProviderError, RawImage, RawOutput};

const PERSONA_NAMES: &[&str] = &[
    "Blaze", "Sheldon", "Marble", "Pip", "Juniper", "Grumble", "Hazel", "Otto", "Luna", "Bramble", "Quill", "Tansy",
];
const LOCATION_NAMES: &[&str] = &[
    "Whispering Woods",
    "Winding Trail",
    "Crystal Lake",
    "Mossy Hollow",
    "Lantern Market",
    "Cedar Ridge",
    "Old Mill",
    "Sunny Meadow",
];
const TONES: &[&str] = &[
    "Joyful",
    "Overconfident",
    "Tense",
    "Hopeful",
    "Playful",
    "Melancholy",
    "Determined",
    "Curious",
    "Warm",
];
const AGES: &[&str] = &[
    "young",
    "middle-aged",
    "elderly",
    "teenage",
    "ancient",
    "about ten years old",
];
const CLOTHING: &[&str] = &[
    "a red scarf and tiny running shoes",
    "a patched green waistcoat",
    "a wide straw hat and overalls",
    "a blue raincoat with brass buttons",
    "a knitted sweater two sizes too big",
];
const SKIN: &[&str] = &[
    "soft white fur",
    "a mossy green shell",
    "freckled tan skin",
    "speckled grey feathers",
    "deep brown skin",
];
const HAIR: &[&str] = &[
    "tufted ears and no hair to speak of",
    "a silver braid",
    "short curly black hair",
    "a shaggy copper mane",
    "bald and shiny",
];
const SETTINGS: &[&str] = &[
    "tall pines lean over a dirt path dappled with morning light",
    "mist drifts over still water ringed by reeds",
    "lanterns sway above crowded stalls selling spices and kites",
    "a narrow path winds between mossy boulders and ferns",
    "a creaking wheel turns beside a stone cottage",
];
const ACTIONS: &[&str] = &[
    "line up at the starting mark",
    "dash past a fallen log",
    "pause to share a snack",
    "argue about the rules",
    "cross a wobbly bridge",
    "celebrate at the finish",
];
const IDEAS: &[&str] = &[
    "A fast Bunny and a slow Turtle had a race through the forest.",
    "A shy lighthouse keeper befriends a lost whale.",
    "Two rival bakers must share one oven on festival night.",
    "A kite that refuses to come down leads a girl across the city.",
    "An old clock repairer discovers a clock that runs backwards.",
    "A fox and a crow open a detective agency in a sleepy village.",
    "A robot gardener tries to grow a flower on the moon.",
    "Three siblings build a raft to reach the island in their grandmother's stories.",
];

#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
}

pub fn mock_provider(seed: u64) -> MockProvider {
    MockProvider { seed }
}

impl MockProvider {
    fn rng(&self, call: &ProviderCall<'_>) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(digest::seed_from(&[
            &self.seed.to_le_bytes(),
            call.schema.as_str().as_bytes(),
            call.prompt.as_bytes(),
        ]))
    }
}

impl Provider for MockProvider {
    fn tag(&self) -> &str {
        "mock"
    }

    fn call(&self, call: &ProviderCall<'_>) -> Result<RawOutput, ProviderError> {
        let mut rng = self.rng(call);
        let prompt = call.prompt;
        let value = match call.schema {
            SchemaId::Ideas => ideas(&mut rng),
            SchemaId::Storyline => storyline(&mut rng, block(prompt, "seed").unwrap_or("")),
            SchemaId::Tones => json!({ "tones": pick_tones(&mut rng, 1, 3) }),
            SchemaId::Personas => personas(&mut rng, &json_block::<Vec<String>>(prompt, "characters")),
            SchemaId::Locations => locations(&mut rng, &json_block::<Vec<String>>(prompt, "locations")),
            SchemaId::Scenes => scenes(&mut rng, prompt),
            SchemaId::SceneRender => scene_render(prompt),
            SchemaId::RevisedStoryline
            | SchemaId::RevisedPersona
            | SchemaId::RevisedLocation
            | SchemaId::RevisedSceneText => revision(call.schema, prompt),
        };
        let image = (call.modality == Modality::TextImage).then(|| placeholder_image(prompt));
        Ok(RawOutput {
            text: serde_json::to_string(&value).expect("mock reply serializes"),
            image,
        })
    }
}

/// Text between `<tag>` and the last `</tag>`, trimmed of one surrounding
/// newline on each side.
fn block<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = prompt.find(&open)? + open.len();
    let end = prompt.rfind(&close)?;
    if end < start {
        return None;
    }
    let inner = &prompt[start..end];
    let inner = inner.strip_prefix('\n').unwrap_or(inner);
    Some(inner.strip_suffix('\n').unwrap_or(inner))
}

fn json_block<T: serde::de::DeserializeOwned + Default>(prompt: &str, tag: &str) -> T {
    block(prompt, tag)
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or_default()
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn pick_tones(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<&'static str> {
    let n = rng.random_range(min..=max);
    TONES.choose_multiple(rng, n).copied().collect()
}

fn ideas(rng: &mut ChaCha8Rng) -> Value {
    let chosen: Vec<&str> = IDEAS.choose_multiple(rng, IDEA_COUNT).copied().collect();
    json!({ "ideas": chosen })
}

fn storyline(rng: &mut ChaCha8Rng, seed: &str) -> Value {
    let n_chars = rng.random_range(1..=3);
    let n_locs = rng.random_range(1..=3);
    let mut chars: Vec<&str> = PERSONA_NAMES.choose_multiple(rng, n_chars).copied().collect();
    let mut locs: Vec<&str> = LOCATION_NAMES.choose_multiple(rng, n_locs).copied().collect();
    chars.shuffle(rng);
    locs.shuffle(rng);

    let gist: String = seed.lines().next().unwrap_or("").chars().take(120).collect();
    let gist = gist.trim();
    let mut text = String::new();
    if !gist.is_empty() {
        text.push_str(&format!("This story grows from a simple idea: {gist} "));
    }
    text.push_str(&format!(
        "It begins in {}, where {} wakes up certain that today will be different.",
        locs[0], chars[0]
    ));
    for c in &chars[1..] {
        text.push_str(&format!(
            " {c} has other plans and joins in, {}.",
            pick(rng, &["grinning", "grumbling", "nervous", "curious"])
        ));
    }
    for l in &locs[1..] {
        text.push_str(&format!(" The journey carries them on to {l}."));
    }
    text.push_str(&format!(
        " By the end, {} learns that {}.",
        chars[0],
        pick(
            rng,
            &[
                "slow and steady wins the race",
                "friends matter more than prizes",
                "courage can be quiet",
                "every mistake teaches something"
            ]
        )
    ));
    json!({ "storyline": text, "characters": chars, "locations": locs })
}

fn personas(rng: &mut ChaCha8Rng, names: &[String]) -> Value {
    let out: Vec<PersonaOut> = names
        .iter()
        .map(|name| PersonaOut {
            name: name.clone(),
            age: pick(rng, AGES).to_string(),
            clothing: pick(rng, CLOTHING).to_string(),
            skin: pick(rng, SKIN).to_string(),
            hair: pick(rng, HAIR).to_string(),
            extra: rng.random_bool(0.5).then(|| format!("{name} hums when thinking")),
        })
        .collect();
    json!({ "personas": out })
}

fn locations(rng: &mut ChaCha8Rng, names: &[String]) -> Value {
    let out: Vec<LocationOut> = names
        .iter()
        .map(|name| LocationOut {
            name: name.clone(),
            description: format!("{name}: {}.", pick(rng, SETTINGS)),
        })
        .collect();
    json!({ "locations": out })
}

fn scenes(rng: &mut ChaCha8Rng, prompt: &str) -> Value {
    #[derive(serde::Deserialize)]
    struct Named {
        name: String,
    }
    let personas: Vec<String> = json_block::<Vec<Named>>(prompt, "personas")
        .into_iter()
        .map(|n| n.name)
        .collect();
    let locations: Vec<String> = json_block::<Vec<Named>>(prompt, "locations")
        .into_iter()
        .map(|n| n.name)
        .collect();
    let personas = if personas.is_empty() {
        vec!["A traveller".to_string()]
    } else {
        personas
    };
    let locations = if locations.is_empty() {
        vec!["the road".to_string()]
    } else {
        locations
    };

    let scenes: Vec<Value> = (0..6)
        .map(|i| {
            let lead = &personas[i % personas.len()];
            let place = &locations[(i / 2) % locations.len()];
            let action = ACTIONS[i % ACTIONS.len()];
            let (prompt_text, narration) = match personas.get((i + 1) % personas.len()) {
                Some(other) if other != lead && rng.random_bool(0.6) => (
                    format!("{lead} and {other} {action} in {place}."),
                    format!("In {place}, {lead} and {other} {action}."),
                ),
                _ => (
                    format!("{lead} {} in {place}.", singular(action)),
                    format!("In {place}, {lead} {}.", singular(action)),
                ),
            };
            json!({
                "image_prompt": prompt_text,
                "narration": narration,
                "tones": pick_tones(rng, 1, 2),
            })
        })
        .collect();
    json!({ "scenes": scenes })
}

fn singular(action: &str) -> String {
    let mut words = action.splitn(2, ' ');
    let verb = words.next().unwrap_or("");
    let rest = words.next().map(|r| format!(" {r}")).unwrap_or_default();
    let verb = match verb {
        "dash" => "dashes".to_string(),
        "cross" => "crosses".to_string(),
        v => format!("{v}s"),
    };
    format!("{verb}{rest}")
}

/// Keeps the current narration and appends a mention of any embedded
/// entity it does not already name.
fn scene_render(prompt: &str) -> Value {
    let mut names: Vec<String> = Vec::new();
    let mut narration = String::new();
    for line in prompt.lines() {
        if line.starts_with("persona ") || line.starts_with("location ") {
            if let Some((_, json)) = line.split_once(": ") {
                if let Ok(v) = serde_json::from_str::<Value>(json) {
                    if let Some(n) = v.get("name").and_then(Value::as_str) {
                        names.push(n.to_string());
                    }
                }
            }
        } else if let Some(rest) = line.strip_prefix("narration: ") {
            narration = serde_json::from_str(rest).unwrap_or_default();
        }
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let found = link::match_names(&narration, &refs);
    let missing: Vec<&str> = refs
        .iter()
        .enumerate()
        .filter(|(i, _)| !found.iter().any(|(_, p)| p == i))
        .map(|(_, n)| *n)
        .collect();
    if narration.trim().is_empty() {
        narration = "The scene unfolds.".to_string();
    }
    if !missing.is_empty() {
        narration.push_str(&format!(
            " {} {} here too.",
            missing.join(" and "),
            if missing.len() == 1 { "is" } else { "are" }
        ));
    }
    json!({ "narration": narration })
}

fn placeholder_image(prompt: &str) -> RawImage {
    let handle = digest::sha256_hex(prompt.as_bytes());
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\">\
<rect width=\"640\" height=\"360\" fill=\"#{}\"/>\
<text x=\"20\" y=\"40\" font-family=\"monospace\" font-size=\"14\">{}</text></svg>",
        &handle[..6],
        &handle[..16]
    );
    RawImage {
        handle,
        media_type: "image/svg+xml".to_string(),
        bytes: svg.into_bytes(),
        provider_tag: "mock".to_string(),
    }
}

fn strip_article(s: &str) -> &str {
    let lower = s.to_ascii_lowercase();
    for art in ["a ", "an ", "the "] {
        if lower.starts_with(art) {
            return s[art.len()..].trim();
        }
    }
    s
}

fn trim_value(s: &str) -> &str {
    s.trim()
        .trim_end_matches(['.', '!'])
        .trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}')
        .trim()
}

/// `(from, to)` for instructions shaped like "change A to B",
/// "replace A with B", "rename A to B" or "rename to B" (from empty).
fn parse_change(instruction: &str) -> Option<(String, String)> {
    let text = instruction.trim();
    // ASCII lowering keeps byte offsets valid for slicing `text`.
    let lower = text.to_ascii_lowercase();
    let body_start = ["please "].iter().fold(0, |acc, p| {
        if lower[acc..].starts_with(p) {
            acc + p.len()
        } else {
            acc
        }
    });
    let verbs = ["rename ", "change ", "replace ", "swap ", "turn "];
    let verb = verbs.iter().find(|v| lower[body_start..].starts_with(*v))?;
    let args_start = body_start + verb.len();
    let args_lower = &lower[args_start..];
    let (sep_at, sep_len) = [" to ", " with ", " into ", " as "]
        .iter()
        .filter_map(|sep| args_lower.find(sep).map(|i| (i, sep.len())))
        .min()
        .or_else(|| {
            ["to ", "as "]
                .iter()
                .find(|p| args_lower.starts_with(*p))
                .map(|p| (0, p.len()))
        })?;
    let from = text[args_start..args_start + sep_at].trim();
    let to = trim_value(&text[args_start + sep_at + sep_len..]);
    let from = match from.to_lowercase().as_str() {
        "him" | "her" | "it" | "them" | "this" | "the name" => "",
        _ => from,
    };
    if to.is_empty() {
        return None;
    }
    Some((
        strip_article(trim_value(from)).to_string(),
        strip_article(to).to_string(),
    ))
}

fn replace_ci(haystack: &str, from: &str, to: &str) -> Option<String> {
    let spans = link::match_names(haystack, &[from]);
    if spans.is_empty() {
        return None;
    }
    let spans: Vec<_> = spans.into_iter().map(|(s, _)| s).collect();
    Some(link::rewrite_spans(haystack, &spans, to))
}

fn revision(schema: SchemaId, prompt: &str) -> Value {
    let mut component: Value = block(prompt, "component")
        .and_then(|b| serde_json::from_str(b).ok())
        .unwrap_or_else(|| json!({}));
    let instruction = block(prompt, "instruction").unwrap_or("").trim().to_string();
    let (name_field, append_field) = match schema {
        SchemaId::RevisedStoryline => (None, "storyline"),
        SchemaId::RevisedPersona => (Some("name"), "extra"),
        SchemaId::RevisedLocation => (Some("name"), "description"),
        _ => (None, "text"),
    };

    let mut applied = false;
    if let Some((from, to)) = parse_change(&instruction) {
        if from.is_empty() {
            if let Some(field) = name_field {
                component[field] = json!(to);
                applied = true;
            }
        } else if let Some(obj) = component.as_object_mut() {
            for (_, v) in obj.iter_mut() {
                if let Some(s) = v.as_str() {
                    if let Some(new) = replace_ci(s, &from, &to) {
                        *v = json!(new);
                        applied = true;
                    }
                }
            }
        }
    }
    if !applied && !instruction.is_empty() {
        let current = component
            .get(append_field)
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim()
            .to_string();
        let addition = instruction.trim_end_matches('.');
        let joined = match (current.is_empty(), append_field) {
            (true, _) => format!("{addition}."),
            (false, "extra") => format!("{current}; {addition}"),
            (false, _) => format!("{current} {addition}."),
        };
        component[append_field] = json!(joined);
    }
    component
}
