//! Seeded two-source demo: a movie catalogue and a music catalogue whose
//! people overlap, plus the intents, operators and streams the live
//! endpoint needs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use saga_core::embed::{ModelKind, TrainConfig};
use saga_core::ingest::{Artifact, PgfRule, SourceConfig};
use saga_core::kg::{PredicateDef, Range};
use saga_core::link::{BlockingFunction, Comparator, Feature, LinkConfig, MatchingModel};
use saga_core::live::{Guard, IntentAlternative, IntentDef};
use saga_core::Ontology;

use crate::config::{LiveSettings, PipelineConfig, Thresholds};
use crate::CliError;

pub const DEMO_YEAR: u32 = 2026;

#[derive(Clone, Debug, PartialEq)]
pub struct DemoOptions {
    pub seed: u64,
    /// Multiplies the generated entity counts; the fixed cast is always present.
    pub scale: f64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self { seed: 7, scale: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DemoSummary {
    pub config: PathBuf,
    pub movie_rows: usize,
    pub music_rows: usize,
    /// Music artists that are also people in the movie source.
    pub shared_people: usize,
    pub stream_records: usize,
}

const FIRST: &[&str] = &[
    "Ada", "Bram", "Cora", "Dmitri", "Elsa", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Lars", "Mira", "Nico",
    "Olga", "Pavel", "Quinn", "Rosa", "Soren", "Tara", "Umar", "Vera", "Wim", "Xenia", "Yusuf", "Zora", "Anton",
    "Bianca", "Cyrus", "Delia", "Emil", "Fiona", "Gideon", "Hana", "Ivo", "Jana", "Kofi", "Lena", "Milo", "Nadia",
];

const LAST: &[&str] = &[
    "Abara",
    "Bellweather",
    "Castellano",
    "Dunmore",
    "Eklund",
    "Fairbank",
    "Galloway",
    "Halvorsen",
    "Ishikawa",
    "Jablonski",
    "Kowalczyk",
    "Lindqvist",
    "Montague",
    "Nakamura",
    "Okonkwo",
    "Pellegrino",
    "Quarles",
    "Rasmussen",
    "Szabo",
    "Thorne",
    "Underhill",
    "Vasquez",
    "Whitcombe",
    "Xiong",
    "Yardley",
    "Zielinski",
    "Achebe",
    "Brannigan",
    "Czerny",
    "Delacroix",
    "Esposito",
    "Fontaine",
    "Grimaldi",
    "Huxley",
    "Iversen",
    "Jovanovic",
    "Kimura",
    "Lombardi",
    "Marchetti",
    "Novak",
];

const ADJECTIVES: &[&str] = &[
    "Silent",
    "Crimson",
    "Hidden",
    "Broken",
    "Golden",
    "Midnight",
    "Distant",
    "Frozen",
    "Burning",
    "Wandering",
    "Electric",
    "Velvet",
    "Hollow",
    "Restless",
    "Painted",
    "Sunken",
    "Northern",
    "Glass",
    "Iron",
    "Paper",
];

const NOUNS: &[&str] = &[
    "Harbor",
    "Orchard",
    "Signal",
    "Lantern",
    "Meridian",
    "Tide",
    "Garden",
    "Circuit",
    "Canyon",
    "Monsoon",
    "Archive",
    "Compass",
    "Horizon",
    "Labyrinth",
    "Parade",
    "Quarry",
    "Reverie",
    "Satellite",
    "Thicket",
    "Voyage",
    "Ember",
    "Cathedral",
    "Avalanche",
    "Mirage",
    "Frontier",
];

const GENRES: &[&str] = &["drama", "comedy", "thriller", "documentary", "animation", "romance", "western"];

const COUNTRIES: &[&str] =
    &["Canada", "United States", "France", "Germany", "Japan", "Brazil", "India", "Kenya", "Norway", "Chile", "Spain"];

/// (city, country index)
const CITIES: &[(&str, usize)] = &[
    ("Chicago", 1),
    ("Hollywood", 1),
    ("Concord", 1),
    ("Seattle", 1),
    ("Boston", 1),
    ("Austin", 1),
    ("Toronto", 0),
    ("Montreal", 0),
    ("Vancouver", 0),
    ("Halifax", 0),
    ("Paris", 2),
    ("Lyon", 2),
    ("Marseille", 2),
    ("Berlin", 3),
    ("Munich", 3),
    ("Hamburg", 3),
    ("Tokyo", 4),
    ("Osaka", 4),
    ("Kyoto", 4),
    ("Sao Paulo", 5),
    ("Recife", 5),
    ("Salvador", 5),
    ("Mumbai", 6),
    ("Chennai", 6),
    ("Pune", 6),
    ("Nairobi", 7),
    ("Mombasa", 7),
    ("Kisumu", 7),
    ("Oslo", 8),
    ("Bergen", 8),
    ("Tromso", 8),
    ("Santiago", 9),
    ("Valparaiso", 9),
    ("Antofagasta", 9),
    ("Madrid", 10),
    ("Seville", 10),
    ("Bilbao", 10),
    ("Valencia", 10),
    ("Granada", 10),
    ("Zaragoza", 10),
];

struct Person {
    id: String,
    name: String,
    birth_year: u32,
    gender: &'static str,
    birthplace: usize,
    spouse: Option<usize>,
}

/// Fixed people every demo contains: (name, birth year, gender, birth city).
const CAST: &[(&str, u32, &str, &str)] = &[
    ("Tom Hanks", 1956, "male", "Concord"),
    ("Rita Wilson", 1956, "female", "Hollywood"),
    ("Beyoncé", 1981, "female", "Austin"),
    ("Jay-Z", 1969, "male", "Boston"),
    ("Justin Trudeau", 1971, "male", "Montreal"),
    ("Brandon Johnson", 1976, "male", "Chicago"),
    ("Joe Biden", 1942, "male", "Seattle"),
];

fn city_index(name: &str) -> usize {
    CITIES.iter().position(|(c, _)| *c == name).expect("fixed city")
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64) * scale).round().max(1.0) as usize
}

fn row(pairs: &[(&str, Value)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        if !v.is_null() {
            m.insert((*k).to_string(), v.clone());
        }
    }
    Value::Object(m)
}

fn titles(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut round = 0;
    while out.len() < n {
        let mut combos: Vec<String> = ADJECTIVES
            .iter()
            .flat_map(|a| NOUNS.iter().map(move |b| format!("The {a} {b}")))
            .map(|t| if round == 0 { t } else { format!("{t} {}", round + 1) })
            .collect();
        combos.shuffle(rng);
        for t in combos {
            if out.len() == n {
                break;
            }
            if taken.insert(t.clone()) {
                out.push(t);
            }
        }
        round += 1;
    }
    out
}

fn ontology() -> Ontology {
    let mut o = Ontology::new(["person", "city", "country", "movie", "album", "song"])
        .with_literal("name", false)
        .with_literal("title", false)
        .with_literal("birth_year", true)
        .with_literal("age", true)
        .with_literal("sex_or_gender", true)
        .with_literal("year", true)
        .with_literal("genre", false)
        .with_literal("popularity", true)
        .with_literal("monthly_listeners", true)
        .with_entity("spouse", "person")
        .with_entity("located_in", "country")
        .with_entity("director", "person")
        .with_entity("cast", "person")
        .with_entity("performer", "person")
        .with_entity("album", "album");
    for (p, t) in
        [("place_of_birth", "city"), ("prime_minister", "person"), ("mayor", "person"), ("recorded_in", "city")]
    {
        o.add_predicate(PredicateDef { name: p.into(), range: Range::Entity(t.into()), functional: true });
    }
    o
}

fn person_link() -> LinkConfig {
    LinkConfig {
        entity_type: "person".into(),
        blocking: vec![BlockingFunction::Token { predicate: "name".into() }],
        model: MatchingModel {
            kind: saga_core::link::ModelKind::Logistic,
            bias: -12.0,
            features: vec![
                Feature {
                    predicate: "name".into(),
                    comparator: Comparator::Jaccard { q: 3 },
                    weight: 12.0,
                    threshold: 0.5,
                },
                Feature { predicate: "birth_year".into(), comparator: Comparator::Exact, weight: 4.0, threshold: 0.5 },
            ],
        },
        tau_pos: 0.9,
        tau_neg: 0.1,
        seeds: 11,
        graph_deduped: true,
    }
}

fn source_config(id: &str, columns: &[&str], refs: &[&str], volatile: &[&str], trust: f64) -> SourceConfig {
    let mut rules = vec![PgfRule::rename("kind", "type")];
    rules.extend(columns.iter().map(|c| PgfRule::rename(c, c)));
    SourceConfig {
        source_id: id.into(),
        format: "jsonl".into(),
        artifacts: vec![Artifact { path: format!("{id}.jsonl"), group: "rows".into(), format: None }],
        id_column: "id".into(),
        primary_group: None,
        joins: Vec::new(),
        schema: Vec::new(),
        pgf_rules: rules,
        required_predicates: vec!["type".into()],
        volatile_predicates: volatile.iter().map(|s| s.to_string()).collect(),
        entity_ref_predicates: refs.iter().map(|s| s.to_string()).collect(),
        default_trust: trust,
        locale: Some("en".into()),
        multi_value_separator: "|".into(),
    }
}

fn alt(any_type: &[&str], has_facts: &[&str], template: &str) -> IntentAlternative {
    IntentAlternative {
        guard: Guard {
            arg: 0,
            any_type: any_type.iter().map(|s| s.to_string()).collect(),
            has_facts: has_facts.iter().map(|s| s.to_string()).collect(),
        },
        template: template.into(),
    }
}

pub fn demo_intents() -> Vec<IntentDef> {
    vec![
        IntentDef {
            name: "HeadOfState".into(),
            arg_types: vec![],
            alternatives: vec![
                alt(
                    &["country"],
                    &["prime_minister"],
                    "MATCH (c)-[prime_minister]->(h) WHERE ID(c, $0) RETURN h, h.name",
                ),
                alt(&["city"], &["mayor"], "MATCH (c)-[mayor]->(h) WHERE ID(c, $0) RETURN h, h.name"),
            ],
        },
        IntentDef {
            name: "SpouseOf".into(),
            arg_types: vec!["person".into()],
            alternatives: vec![alt(
                &["person"],
                &["spouse"],
                "MATCH (a)-[spouse]->(b) WHERE ID(a, $0) RETURN b, b.name",
            )],
        },
        IntentDef {
            name: "Birthplace".into(),
            arg_types: vec!["person".into()],
            alternatives: vec![alt(
                &["person"],
                &["place_of_birth"],
                "MATCH (a)-[place_of_birth]->(p) WHERE ID(a, $0) RETURN p, p.name",
            )],
        },
        IntentDef {
            name: "AgeOf".into(),
            arg_types: vec!["person".into()],
            alternatives: vec![alt(&["person"], &["age"], "MATCH (a) WHERE ID(a, $0) RETURN a, a.age")],
        },
    ]
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| CliError::stage("init-demo", e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::stage("init-demo", format!("{}: {e}", path.display())))
}

fn write_pretty<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    write(path, &serde_json::to_vec_pretty(v).map_err(|e| CliError::stage("init-demo", e))?)
}

fn write_lines(path: &Path, rows: &[Value]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| CliError::stage("init-demo", e))?;
        buf.push(b'\n');
    }
    write(path, &buf)
}

/// Writes the demo under `dir` and returns where its `saga.json` is.
pub fn init_demo(dir: &Path, opts: &DemoOptions) -> Result<DemoSummary, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_people = scaled(700, opts.scale).max(CAST.len() + 2);
    let n_movies = scaled(500, opts.scale);
    let n_artists = scaled(600, opts.scale).max(4);
    let n_shared = scaled(150, opts.scale).min(n_people - CAST.len()).min(n_artists - 2);
    let n_albums = scaled(300, opts.scale);
    let n_songs = scaled(200, opts.scale).max(1);

    let mut names: Vec<String> = FIRST.iter().flat_map(|f| LAST.iter().map(move |l| format!("{f} {l}"))).collect();
    names.shuffle(&mut rng);
    let mut names = names.into_iter();

    let mut people: Vec<Person> = CAST
        .iter()
        .enumerate()
        .map(|(i, (n, y, g, c))| Person {
            id: format!("p{}", i + 1),
            name: n.to_string(),
            birth_year: *y,
            gender: g,
            birthplace: city_index(c),
            spouse: None,
        })
        .collect();
    people[0].spouse = Some(1);
    people[1].spouse = Some(0);
    people[2].spouse = Some(3);
    people[3].spouse = Some(2);
    while people.len() < n_people {
        let i = people.len();
        people.push(Person {
            id: format!("p{}", i + 1),
            name: names.next().expect("enough names"),
            birth_year: rng.gen_range(1940..2005),
            gender: if rng.gen_bool(0.5) { "female" } else { "male" },
            birthplace: rng.gen_range(0..CITIES.len()),
            spouse: None,
        });
    }
    let mut singles: Vec<usize> = (CAST.len()..people.len()).collect();
    singles.shuffle(&mut rng);
    for pair in singles[..singles.len() / 5 * 2].chunks(2) {
        people[pair[0]].spouse = Some(pair[1]);
        people[pair[1]].spouse = Some(pair[0]);
    }

    let mut movies: Vec<Value> = Vec::new();
    let mut country_ids = Vec::new();
    for (i, c) in COUNTRIES.iter().enumerate() {
        let id = format!("k{}", i + 1);
        let pm = match *c {
            "Canada" => Value::from("p5"),
            "Japan" | "India" | "Norway" | "Spain" => {
                Value::from(people[rng.gen_range(CAST.len()..people.len())].id.clone())
            }
            _ => Value::Null,
        };
        movies.push(row(&[
            ("id", id.clone().into()),
            ("kind", "country".into()),
            ("name", (*c).into()),
            ("prime_minister", pm),
        ]));
        country_ids.push(id);
    }
    for (i, (c, k)) in CITIES.iter().enumerate() {
        let mayor = if *c == "Chicago" {
            Value::from("p6")
        } else if rng.gen_bool(0.3) {
            Value::from(people[rng.gen_range(CAST.len()..people.len())].id.clone())
        } else {
            Value::Null
        };
        movies.push(row(&[
            ("id", format!("c{}", i + 1).into()),
            ("kind", "city".into()),
            ("name", (*c).into()),
            ("located_in", country_ids[*k].clone().into()),
            ("mayor", mayor),
        ]));
    }
    for p in &people {
        movies.push(row(&[
            ("id", p.id.clone().into()),
            ("kind", "person".into()),
            ("name", p.name.clone().into()),
            ("birth_year", p.birth_year.to_string().into()),
            ("age", (DEMO_YEAR - 1 - p.birth_year).to_string().into()),
            ("sex_or_gender", p.gender.into()),
            ("place_of_birth", format!("c{}", p.birthplace + 1).into()),
            ("spouse", p.spouse.map_or(Value::Null, |s| people[s].id.clone().into())),
        ]));
    }
    let mut taken: BTreeSet<String> = BTreeSet::new();
    for (i, t) in titles(&mut rng, n_movies, &mut taken).into_iter().enumerate() {
        let cast: BTreeSet<String> =
            (0..rng.gen_range(2..5)).map(|_| people[rng.gen_range(0..people.len())].id.clone()).collect();
        movies.push(row(&[
            ("id", format!("m{}", i + 1).into()),
            ("kind", "movie".into()),
            ("title", t.into()),
            ("year", rng.gen_range(1970..2026).to_string().into()),
            ("director", people[rng.gen_range(0..people.len())].id.clone().into()),
            ("cast", Value::Array(cast.into_iter().map(Value::from).collect())),
            ("genre", GENRES[rng.gen_range(0..GENRES.len())].into()),
            ("popularity", rng.gen_range(1..1000).to_string().into()),
        ]));
    }

    let mut music: Vec<Value> = Vec::new();
    let mut shared: Vec<usize> = vec![2, 3];
    let mut pool: Vec<usize> = (CAST.len()..people.len()).collect();
    pool.shuffle(&mut rng);
    shared.extend(pool.into_iter().take(n_shared.saturating_sub(2)));
    let mut artists: Vec<(String, String)> = Vec::new();
    for (i, &pi) in shared.iter().enumerate() {
        let p = &people[pi];
        let id = format!("a{}", i + 1);
        let spouse = match pi {
            2 => Value::from("a2"),
            3 => Value::from("a1"),
            _ => Value::Null,
        };
        music.push(row(&[
            ("id", id.clone().into()),
            ("kind", "person".into()),
            ("name", p.name.clone().into()),
            ("birth_year", p.birth_year.to_string().into()),
            ("sex_or_gender", p.gender.into()),
            ("spouse", spouse),
            ("monthly_listeners", rng.gen_range(1000..10_000_000).to_string().into()),
        ]));
        artists.push((id, p.name.clone()));
    }
    while artists.len() < n_artists {
        let id = format!("a{}", artists.len() + 1);
        let name = names.next().expect("enough names");
        music.push(row(&[
            ("id", id.clone().into()),
            ("kind", "person".into()),
            ("name", name.clone().into()),
            ("birth_year", rng.gen_range(1950..2008).to_string().into()),
            ("sex_or_gender", if rng.gen_bool(0.5) { "female" } else { "male" }.into()),
            ("monthly_listeners", rng.gen_range(1000..10_000_000).to_string().into()),
        ]));
        artists.push((id, name));
    }
    let album_titles = titles(&mut rng, n_albums, &mut taken);
    let mut album_ids = Vec::new();
    for (i, t) in album_titles.into_iter().enumerate() {
        let id = format!("b{}", i + 1);
        let performer = if i == 0 { "a1".to_string() } else { artists[rng.gen_range(0..artists.len())].0.clone() };
        music.push(row(&[
            ("id", id.clone().into()),
            ("kind", "album".into()),
            ("title", t.into()),
            ("year", rng.gen_range(1970..2026).to_string().into()),
            ("performer", performer.into()),
            ("recorded_in", CITIES[rng.gen_range(0..CITIES.len())].0.into()),
        ]));
        album_ids.push(id);
    }
    let mut song_titles = vec!["Halo".to_string()];
    taken.insert("Halo".into());
    song_titles.extend(titles(&mut rng, n_songs - 1, &mut taken));
    for (i, t) in song_titles.into_iter().enumerate() {
        let (performer, album) = if i == 0 {
            ("a1".to_string(), album_ids.first().cloned())
        } else {
            (artists[rng.gen_range(0..artists.len())].0.clone(), album_ids.choose(&mut rng).cloned())
        };
        music.push(row(&[
            ("id", format!("s{}", i + 1).into()),
            ("kind", "song".into()),
            ("title", t.into()),
            ("performer", performer.into()),
            ("album", album.map_or(Value::Null, Value::from)),
        ]));
    }

    let streams = vec![
        json!({"stream": "charts", "natural_key": "halo-week-41", "fields": {"position": 1, "week": "2026-W41"},
               "entity_references": [{"field": "song", "surface": "Halo", "type_hint": "song"}]}),
        json!({"stream": "scores", "natural_key": "chicago-toronto-1016", "fields": {"home_score": 102, "away_score": 97},
               "entity_references": [
                   {"field": "home_city", "surface": "Chicago", "type_hint": "city"},
                   {"field": "away_city", "surface": "Toronto", "type_hint": "city"}]}),
        json!({"stream": "scores", "natural_key": "qzxv-1016", "fields": {"home_score": 3},
               "entity_references": [{"field": "venue", "surface": "Qzxv Arena", "type_hint": "city"}]}),
    ];

    let movie_cols = [
        "name",
        "title",
        "birth_year",
        "age",
        "sex_or_gender",
        "place_of_birth",
        "spouse",
        "prime_minister",
        "mayor",
        "located_in",
        "year",
        "director",
        "cast",
        "genre",
        "popularity",
    ];
    let movie_refs = ["place_of_birth", "spouse", "prime_minister", "mayor", "located_in", "director", "cast"];
    let music_cols = [
        "name",
        "title",
        "birth_year",
        "sex_or_gender",
        "spouse",
        "monthly_listeners",
        "year",
        "performer",
        "recorded_in",
        "album",
    ];
    let movies_cfg = source_config("movies", &movie_cols, &movie_refs, &["popularity"], 0.9);
    let music_cfg = source_config("music", &music_cols, &["spouse", "performer", "album"], &["monthly_listeners"], 0.8);

    let cfg = PipelineConfig {
        data_dir: "data".into(),
        sources: vec!["sources/movies.json".into(), "sources/music.json".into()],
        ontology: "ontology.json".into(),
        link: Some("link.json".into()),
        thresholds: Thresholds { theta_reject: Some(0.7), ..Thresholds::default() },
        views: None,
        view_targets: Vec::new(),
        embedding: Some(TrainConfig {
            kind: ModelKind::TransE,
            dim: 32,
            epochs: 20,
            learning_rate: 0.05,
            negatives_per_positive: 2,
            margin: 1.0,
            batch_size: 64,
            seed: opts.seed,
        }),
        nerd_weights: None,
        trust: Default::default(),
        seed: opts.seed,
        live: LiveSettings {
            streams: vec!["streams/live.jsonl".into()],
            intents: Some("intents.json".into()),
            operators: Some("operators.kgq".into()),
            ..LiveSettings::default()
        },
        base_dir: PathBuf::new(),
    };

    write_pretty(&dir.join("ontology.json"), &ontology())?;
    write_pretty(&dir.join("link.json"), &vec![person_link()])?;
    write_pretty(&dir.join("sources/movies.json"), &movies_cfg)?;
    write_pretty(&dir.join("sources/music.json"), &music_cfg)?;
    write_lines(&dir.join("sources/movies.jsonl"), &movies)?;
    write_lines(&dir.join("sources/music.jsonl"), &music)?;
    write_lines(&dir.join("streams/live.jsonl"), &streams)?;
    write_pretty(&dir.join("intents.json"), &demo_intents())?;
    write(&dir.join("operators.kgq"), b"# city -> country\nLocatedInCountry(x, c) := (x)-[located_in]->(c:country)\n")?;
    let config = dir.join("saga.json");
    write_pretty(&config, &cfg)?;
    Ok(DemoSummary {
        config,
        movie_rows: movies.len(),
        music_rows: music.len(),
        shared_people: shared.len(),
        stream_records: streams.len(),
    })
}
