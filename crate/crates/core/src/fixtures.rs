//! Deterministic fixture corpora shared by tests and benches.
//!
//! Everything here is constructed from constants or index arithmetic, never
//! from an RNG, so expected values frozen in tests stay valid.

use crate::corpus::{Dialogue, PersonaKind, Speaker, Turn, Utterance};

/// Two hand-countable dialogues in the raw distribution format: 3 turns and
/// 4 turns, 20 candidates per turn, gold at varying positions.
pub const RAW_FIXTURE: &str = concat!(
    "1 your persona: i like to paint landscapes .\n",
    "2 your persona: i have two dogs .\n",
    "3 your persona: my favorite season is fall .\n",
    "4 hello how are you ?\ti am great just finished a painting .\t\t",
    "no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday|i am great just finished a painting .\n",
    "5 what do you paint ?\tmostly landscapes of the hills .\t\t",
    "mostly landscapes of the hills .|no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday\n",
    "6 do you have pets ?\tyes two dogs keep me company .\t\t",
    "no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|yes two dogs keep me company .|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday\n",
    "1 your persona: i work as a chef .\n",
    "2 your persona: i run marathons on weekends .\n",
    "3 your persona: i grew up in a small town .\n",
    "4 your persona: my favorite food is pasta .\n",
    "5 hi there what do you do ?\ti cook at a small restaurant .\t\t",
    "no way that sounds fun|i cook at a small restaurant .|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday\n",
    "6 wow do you like running ?\tyes i run marathons on weekends .\t\t",
    "no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday|yes i run marathons on weekends .\n",
    "7 where did you grow up ?\tin a small town by the river .\t\t",
    "no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|in a small town by the river .|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday\n",
    "8 what is your favorite dish ?\tpasta is my favorite thing to make .\t\t",
    "no way that sounds fun|i will be there soon|my car broke down again|the weather is cold today|i prefer tea over coffee|that movie was too long|i lost my keys yesterday|we should meet sometime|my phone battery died|the game starts at nine|i am learning to dance|she sells seashells downtown|the library closes early|my brother plays guitar|pasta is my favorite thing to make .|i never eat breakfast|the bus was late again|i love watching birds|that book changed my mind|the store is closed sunday\n",
);

/// Small deterministic corpus: `n` dialogues, 2 turns each, 4 candidates per
/// turn. Useful wherever the tests only need valid structure.
pub fn tiny_corpus(n: usize) -> Vec<Dialogue> {
    let topics = [
        "gardening", "astronomy", "chess", "cycling", "pottery", "surfing", "baking", "jazz",
        "hiking", "origami", "fishing", "archery",
    ];
    (0..n)
        .map(|i| {
            let a = topics[i % topics.len()];
            let b = topics[(i + 1) % topics.len()];
            let gold1 = format!("i love {a} very much");
            let gold2 = format!("{b} keeps me busy all week");
            Dialogue {
                id: format!("{i:06}"),
                persona_kind: PersonaKind::SelfOriginal,
                persona: vec![
                    format!("i love {a}"),
                    format!("my weekends are for {b}"),
                    "i drink water daily".to_string(),
                ],
                utterances: vec![
                    Utterance::new(Speaker::User, format!("do you like {a} ?")),
                    Utterance::new(Speaker::Bot, gold1.clone()),
                    Utterance::new(Speaker::User, format!("what about {b} ?")),
                    Utterance::new(Speaker::Bot, gold2.clone()),
                ],
                turns: vec![
                    Turn {
                        context_len: 1,
                        candidates: vec![
                            "the bus was late".to_string(),
                            gold1,
                            "my roof leaks".to_string(),
                            "cats sleep all day".to_string(),
                        ],
                        gold_index: 1,
                    },
                    Turn {
                        context_len: 3,
                        candidates: vec![
                            "the bus was late".to_string(),
                            "my roof leaks".to_string(),
                            "cats sleep all day".to_string(),
                            gold2,
                        ],
                        gold_index: 3,
                    },
                ],
            }
        })
        .collect()
}

/// A dialogue whose persona, context, and gold response share mineable
/// concepts: reading mysteries / seven children / teach kindergarten.
pub fn concept_rich_dialogue() -> Dialogue {
    let gold = "do you teach mysteries to your children ? they are my favorite type of novel .";
    let distractors = [
        "that must be a lot of work but very rewarding i bet",
        "the weather is nice here today",
        "i will be there soon",
        "my car broke down again",
    ];
    let mut candidates: Vec<String> = distractors.iter().map(|s| s.to_string()).collect();
    candidates.insert(2, gold.to_string());
    Dialogue {
        id: "case-000".to_string(),
        persona_kind: PersonaKind::SelfOriginal,
        persona: vec![
            "my favorite color is blue .".to_string(),
            "i enjoy reading mysteries .".to_string(),
            "i have seven children .".to_string(),
            "i grew up on a large farm .".to_string(),
        ],
        utterances: vec![
            Utterance::new(Speaker::User, "hello how are you today ?"),
            Utterance::new(Speaker::Bot, "i am well . how are you ?"),
            Utterance::new(Speaker::User, "i am doing great just got back from the beach"),
            Utterance::new(Speaker::Bot, "that is great . i live far from the beach ."),
            Utterance::new(
                Speaker::User,
                "i am very lucky we live beside the beach . what do you do for a living ?",
            ),
            Utterance::new(Speaker::Bot, "i keep busy with my seven children ."),
            Utterance::new(
                Speaker::User,
                "wow that must have taken some adjusting i teach kindergarten .",
            ),
            Utterance::new(Speaker::Bot, gold),
        ],
        turns: vec![Turn {
            context_len: 7,
            candidates,
            gold_index: 2,
        }],
    }
}

/// [`concept_rich_dialogue`] plus filler dialogues that shape the
/// co-occurrence statistics: "your"/"type"/"great"/"beach"/"weather" are
/// frequent across fillers, while the concept words of the main dialogue
/// stay rare and co-occur only there.
pub fn concept_rich_corpus() -> Vec<Dialogue> {
    let mut corpus = vec![concept_rich_dialogue()];
    let filler_lines: [(&str, &str); 11] = [
        ("what type of music do you like ?", "i like your taste it is great"),
        ("what type of shows do you watch ?", "your shows are great to watch"),
        ("is the weather nice at the beach ?", "the weather at the beach is great"),
        ("what type of games do you play ?", "your games sound great to me"),
        ("do you walk on the beach ?", "the beach is great in the morning"),
        ("what type of food do you cook ?", "your cooking sounds great"),
        ("is the weather bad today ?", "the weather is bad near the beach"),
        ("what type of plants do you grow ?", "your large garden must be great"),
        ("do you swim at the beach ?", "the beach water is warm"),
        ("what type of car do you drive ?", "your car sounds fast"),
        ("is the weather cold there ?", "the weather turned cold fast"),
    ];
    for (i, (user, bot)) in filler_lines.iter().enumerate() {
        corpus.push(Dialogue {
            id: format!("fill-{i:03}"),
            persona_kind: PersonaKind::SelfOriginal,
            persona: vec![
                "i drink water daily .".to_string(),
                "my town is quiet .".to_string(),
                "i sleep early .".to_string(),
            ],
            utterances: vec![
                Utterance::new(Speaker::User, *user),
                Utterance::new(Speaker::Bot, *bot),
            ],
            turns: vec![Turn {
                context_len: 1,
                candidates: vec![bot.to_string(), "i lost my keys yesterday".to_string()],
                gold_index: 0,
            }],
        });
    }
    corpus
}

/// Corpus for overfit runs: `pairs` turns total, each with
/// `candidates_per_turn` candidates whose distractors are gold responses of
/// other pairs. The gold always shares a topic word with its context and the
/// persona, so a trained model can separate it.
pub fn overfit_corpus(pairs: usize, candidates_per_turn: usize) -> Vec<Dialogue> {
    assert!(candidates_per_turn >= 2);
    let nouns = [
        "garden", "telescope", "chess", "bicycle", "pottery", "surfboard", "oven", "trumpet",
        "trail", "paper", "river", "arrow", "canvas", "piano", "kite", "puzzle", "lantern",
        "quilt", "saddle", "anchor", "compass", "drum", "easel", "fiddle", "globe", "hammock",
        "inkwell", "journal", "kayak", "loom", "mural", "needle", "oar", "palette", "quill",
        "rope", "sled", "tent", "urn", "violin", "wagon", "xylophone", "yarn", "zither",
        "basket", "candle", "dice", "engine", "flute", "grill",
    ];
    assert!(pairs <= nouns.len(), "not enough topics for {pairs} pairs");
    let golds: Vec<String> = (0..pairs)
        .map(|i| format!("yes i love my {} very much", nouns[i]))
        .collect();
    assert!(pairs >= candidates_per_turn, "need pairs >= candidates_per_turn");
    (0..pairs)
        .map(|i| {
            let noun = nouns[i];
            // Distractors drawn deterministically from other pairs.
            let others: Vec<usize> = (0..pairs).filter(|&k| k != i).collect();
            let mut candidates = Vec::with_capacity(candidates_per_turn);
            candidates.push(golds[i].clone());
            for j in 1..candidates_per_turn {
                candidates.push(golds[others[(i * 3 + j * 7) % others.len()]].clone());
            }
            let gold_index = i % candidates_per_turn;
            candidates.swap(0, gold_index);
            Dialogue {
                id: format!("{i:06}"),
                persona_kind: PersonaKind::SelfOriginal,
                persona: vec![
                    format!("i own a {noun}"),
                    format!("my {noun} is my favorite thing"),
                    "i live in a small town".to_string(),
                ],
                utterances: vec![
                    Utterance::new(Speaker::User, format!("do you still use your {noun} ?")),
                    Utterance::new(Speaker::Bot, golds[i].clone()),
                ],
                turns: vec![Turn {
                    context_len: 1,
                    candidates,
                    gold_index,
                }],
            }
        })
        .collect()
}
