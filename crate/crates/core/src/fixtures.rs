//! Sample projects: two hand-written stories and a seeded generator of
//! random valid projects with overlapping entity names.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digest;
use crate::link;
use crate::model::{
    new_project, EntityId, ImageAsset, Location, Persona, ProjectStatus, Scene, SeedIdea, StoryProject, Storyline,
    Tone, DEFAULT_STYLE, SCENE_COUNT,
};

/// Recompute every scene's stored links from its texts.
pub fn refresh_links(project: &mut StoryProject) {
    let snapshot = project.clone();
    let entities: Vec<_> = snapshot.entities().collect();
    for scene in &mut project.scenes {
        scene.links = link::scene_links(scene, &entities);
    }
}

fn tones(labels: &[&str]) -> Vec<Tone> {
    labels.iter().map(|l| Tone::new(*l).unwrap()).collect()
}

fn placeholder_image(project: &StoryProject, scene: &Scene) -> ImageAsset {
    let prompt = format!("{}. {}", project.style, scene.image_prompt);
    ImageAsset {
        handle: digest::sha256_hex(prompt.as_bytes()),
        created_from_prompt: prompt,
        provider_tag: "fixture".into(),
    }
}

fn finish(mut p: StoryProject, scenes: &[(&str, &str)], scene_tones: &[&[&str]]) -> StoryProject {
    p.scenes = scenes
        .iter()
        .enumerate()
        .map(|(i, (prompt, narration))| {
            let mut s = Scene::new(i as u8 + 1, *prompt, *narration);
            s.tones = tones(scene_tones[i % scene_tones.len()]);
            s
        })
        .collect();
    let with_images: Vec<ImageAsset> = p.scenes.iter().map(|s| placeholder_image(&p, s)).collect();
    for (s, img) in p.scenes.iter_mut().zip(with_images) {
        s.image = Some(img);
    }
    p.status = ProjectStatus::Generated;
    refresh_links(&mut p);
    p
}

/// The bunny and turtle race: two personas, two locations, six scenes.
pub fn race_project() -> StoryProject {
    let mut p = new_project(SeedIdea::user("A fast Bunny and a slow Turtle had a race...").unwrap());
    p.personas = vec![
        Persona {
            id: EntityId::persona(1),
            name: "Blaze".into(),
            age: "young adult rabbit".into(),
            clothing: "red running scarf".into(),
            skin: "soft white fur".into(),
            hair: "long upright ears".into(),
            extra: Some("boastful and quick".into()),
        },
        Persona {
            id: EntityId::persona(2),
            name: "Sheldon".into(),
            age: "elderly tortoise".into(),
            clothing: "green knitted vest".into(),
            skin: "wrinkled olive scales".into(),
            hair: "none".into(),
            extra: None,
        },
    ];
    p.locations = vec![
        Location {
            id: EntityId::location(1),
            name: "Whispering Woods".into(),
            description: "a sunlit forest of tall birches with a winding dirt path".into(),
        },
        Location {
            id: EntityId::location(2),
            name: "Winding Trail Finish Line".into(),
            description: "a ribbon stretched between two oaks at the end of the trail".into(),
        },
    ];
    p.storyline = Some(Storyline {
        text: "Blaze the bunny boasts about his speed and challenges Sheldon the turtle to a race \
               through the Whispering Woods. Blaze dashes ahead and naps under a tree. Sheldon keeps \
               a steady pace and crosses the Winding Trail Finish Line first."
            .into(),
        tones: tones(&["Overconfident", "Joyful"]),
    });
    finish(
        p,
        &[
            (
                "Blaze the bunny and Sheldon the turtle at the starting line on a dirth path in Whispering Woods",
                "In Whispering Woods, Blaze the bunny, known for his incredible speed, challenged Sheldon the turtle to a race",
            ),
            (
                "Blaze sprinting far ahead between the birches",
                "Blaze laughed as the forest blurred past him.",
            ),
            (
                "Blaze asleep under a wide oak beside the path",
                "Sure of victory, Blaze curled up for a nap.",
            ),
            (
                "Sheldon plodding steadily along the dirt path",
                "Sheldon never stopped, one careful step after another.",
            ),
            (
                "Sheldon approaching the ribbon at Winding Trail Finish Line",
                "The finish came into view as the sun began to set.",
            ),
            (
                "Sheldon breaking the ribbon while Blaze races up behind",
                "Slow and steady, Sheldon won the race.",
            ),
        ],
        &[&["Overconfident"], &["Joyful"]],
    )
}

/// A story whose `Marble puzzle` persona appears in scenes 2 and 4 only.
pub fn marble_project() -> StoryProject {
    let mut p = new_project(SeedIdea::user("A girl finds a magical puzzle in her grandmother's attic").unwrap());
    p.personas = vec![
        Persona {
            id: EntityId::persona(1),
            name: "Mia".into(),
            age: "ten years old".into(),
            clothing: "yellow raincoat".into(),
            skin: "light brown".into(),
            hair: "curly black pigtails".into(),
            extra: None,
        },
        Persona {
            id: EntityId::persona(2),
            name: "Marble puzzle".into(),
            age: "centuries old".into(),
            clothing: "a brass frame".into(),
            skin: "polished glass marbles".into(),
            hair: "none".into(),
            extra: Some("hums when solved".into()),
        },
    ];
    p.locations = vec![Location {
        id: EntityId::location(1),
        name: "Attic".into(),
        description: "a dusty room under the roof lit by one round window".into(),
    }];
    p.storyline = Some(Storyline {
        text: "Mia explores the Attic on a rainy afternoon and discovers the Marble puzzle. \
               Each solved row opens a door to a new world."
            .into(),
        tones: tones(&["Curious", "Wonder"]),
    });
    finish(
        p,
        &[
            (
                "Mia climbing the ladder into the Attic",
                "Rain drummed on the roof as Mia climbed up.",
            ),
            (
                "Mia lifting the Marble puzzle from an old trunk",
                "Something glittered under the blankets.",
            ),
            (
                "Mia by the round window, rain outside",
                "She wondered who had left it here.",
            ),
            (
                "The Marble puzzle glowing in Mia's hands",
                "The last marble clicked into place.",
            ),
            (
                "A doorway of light opening in the Attic",
                "The wall shimmered and parted.",
            ),
            ("Mia stepping through the doorway", "And so the adventure began."),
        ],
        &[&["Curious"], &["Wonder"]],
    )
}

/// Name families that overlap on purpose: short names are whole words
/// inside longer ones.
pub const NAME_FAMILIES: &[&[&str]] = &[
    &["Woods", "Woodsman", "Whispering Woods"],
    &["Ash", "Ashley", "Ash Grove"],
    &["Pip", "Pippa", "Old Pip"],
    &["Stone", "Stone Bridge", "Bridge"],
    &["River", "River Queen", "Silver River"],
    &["Marble puzzle", "Marble", "Puzzle Box"],
    &["Élan", "Über Élan", "Zoë"],
];

/// Words that share prefixes with names but never match them whole-word.
pub const NEAR_MISSES: &[&str] = &[
    "woodsy",
    "Woodsmen",
    "Ashen",
    "ashes",
    "Pips",
    "pippin",
    "Stones",
    "bridges",
    "Rivers",
    "marbles",
    "élans",
    "whispering",
];

const FILLER: &[&str] = &[
    "the", "a", "quiet", "morning", "ran", "toward", "under", "bright", "sky", "and", "then", "slowly", "laughed",
    "beside", "old", "gate", "near", "path", "while", "rain", "fell", "over", "hill",
];

const PUNCT: &[&str] = &["", "", "", ",", ".", "!", "'s", ";", ":", "\u{2014}"];

const TONE_POOL: &[&str] = &[
    "Joyful",
    "Tense",
    "Curious",
    "Melancholy",
    "Hopeful",
    "Eerie",
    "Playful",
];

fn vary_case(rng: &mut ChaCha8Rng, name: &str) -> String {
    match rng.random_range(0..4) {
        0 => name.to_lowercase(),
        1 => name.to_uppercase(),
        _ => name.to_string(),
    }
}

/// Random words interleaved with mentions drawn from `names`.
pub fn random_text(rng: &mut ChaCha8Rng, names: &[&str], len: usize, mention_rate: f64) -> String {
    let mut words: Vec<String> = Vec::with_capacity(len);
    for _ in 0..len {
        let word = if !names.is_empty() && rng.random_bool(mention_rate) {
            let name = *names.choose(rng).unwrap();
            vary_case(rng, name)
        } else if rng.random_bool(0.15) {
            NEAR_MISSES.choose(rng).unwrap().to_string()
        } else {
            FILLER.choose(rng).unwrap().to_string()
        };
        let punct = PUNCT.choose(rng).unwrap();
        words.push(format!("{word}{punct}"));
    }
    words.join(" ")
}

/// Pick `count` case-insensitively distinct names, mixing families so that
/// overlaps are common.
fn pick_names(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    let mut pool: Vec<&str> = NAME_FAMILIES.iter().flat_map(|f| f.iter().copied()).collect();
    pool.shuffle(rng);
    // Favour one family so that overlapping names co-occur.
    let family = NAME_FAMILIES.choose(rng).unwrap();
    let mut out: Vec<String> = Vec::new();
    for name in family.iter().chain(pool.iter()) {
        if out.len() == count {
            break;
        }
        if rng.random_bool(0.7) && !out.iter().any(|n| link::fold_str(n) == link::fold_str(name)) {
            out.push(name.to_string());
        }
    }
    for name in pool {
        if out.len() == count {
            break;
        }
        if !out.iter().any(|n| link::fold_str(n) == link::fold_str(name)) {
            out.push(name.to_string());
        }
    }
    out
}

/// A random project that passes validation.
pub fn random_project(seed: u64) -> StoryProject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_personas = rng.random_range(1..=3);
    let n_locations = rng.random_range(1..=3);
    let names = pick_names(&mut rng, n_personas + n_locations);
    let (pn, ln) = names.split_at(n_personas);

    let mut p = new_project(SeedIdea::user(format!("random story {seed}")).unwrap());
    p.style = DEFAULT_STYLE.into();
    p.personas = pn
        .iter()
        .enumerate()
        .map(|(i, name)| Persona {
            id: EntityId::persona(i + 1),
            name: name.clone(),
            age: format!("{} years", rng.random_range(5..90)),
            clothing: FILLER.choose(&mut rng).unwrap().to_string() + " coat",
            skin: "tan".into(),
            hair: ["red", "grey", "short", "braided"]
                .choose(&mut rng)
                .unwrap()
                .to_string(),
            extra: rng.random_bool(0.3).then(|| "carries a lantern".to_string()),
        })
        .collect();
    p.locations = ln
        .iter()
        .enumerate()
        .map(|(i, name)| Location {
            id: EntityId::location(i + 1),
            name: name.clone(),
            description: format!("a {} place", FILLER.choose(&mut rng).unwrap()),
        })
        .collect();

    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut storyline = random_text(&mut rng, &name_refs, 12, 0.2);
    for name in &names {
        storyline.push_str(&format!(" Then {name} appeared."));
    }
    let tone_count = rng.random_range(1..=3);
    let story_tones: Vec<Tone> = TONE_POOL
        .choose_multiple(&mut rng, tone_count)
        .map(|t| Tone::new(*t).unwrap())
        .collect();
    p.storyline = Some(Storyline {
        text: storyline,
        tones: story_tones.clone(),
    });

    p.scenes = (1..=SCENE_COUNT as u8)
        .map(|i| {
            let rate = [0.0, 0.1, 0.25][rng.random_range(0..3)];
            let (a, b) = (rng.random_range(4..14), rng.random_range(4..14));
            let prompt = random_text(&mut rng, &name_refs, a, rate);
            let narration = random_text(&mut rng, &name_refs, b, rate);
            let mut s = Scene::new(i, prompt, narration);
            s.tones = story_tones.choose_multiple(&mut rng, 1).cloned().collect();
            s
        })
        .collect();
    for i in 0..p.scenes.len() {
        if rng.random_bool(0.8) {
            let img = placeholder_image(&p, &p.scenes[i]);
            p.scenes[i].image = Some(img);
        }
    }
    p.status = ProjectStatus::Generated;
    refresh_links(&mut p);
    p
}
