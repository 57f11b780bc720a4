//! Synthetic schemas, annotations and frames.
//!
//! Used by the test suites, the benchmarks and the `ssg synth` command to
//! exercise the whole pipeline without the real dataset.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::schema::{
    BBox, FrameStructure, ObjectAnnotation, PersonAnnotation, RelationAnnotation, SchemaFile, SsgAnnotation,
};

const AG_OBJECTS: [&str; 35] = [
    "bag", "bed", "blanket", "book", "box", "broom", "chair", "closet/cabinet", "clothes",
    "cup/glass/bottle", "dish", "door", "doorknob", "doorway", "floor", "food", "groceries", "laptop",
    "light", "medicine", "mirror", "paper/notebook", "phone/camera", "picture", "pillow",
    "refrigerator", "sandwich", "shelf", "shoe", "sofa/couch", "table", "television", "towel",
    "vacuum", "window",
];

const AG_VERBS: [&str; 16] = [
    "carrying", "covered_by", "drinking_from", "eating", "have_it_on_the_back", "holding",
    "leaning_on", "lying_on", "not_contacting", "sitting_on", "standing_on", "touching", "twisting",
    "wearing", "wiping", "writing_on",
];

const OBJECT_ROLES: [&str; 16] = [
    "affordance", "material", "size", "state", "color", "shape", "location", "content", "texture",
    "weight", "cleanliness", "temperature", "openness", "position", "quantity", "function",
];

const VERB_ROLES: [&str; 12] = [
    "agent_part", "tool", "place", "manner", "purpose", "source", "destination", "speed", "duration",
    "force", "direction", "co_agent",
];

const PERSON_ROLES: [&str; 5] = ["posture", "attire", "emotion", "age_group", "activity_level"];

fn role_values(role: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{role}_v{i}")).collect()
}

/// A full-size schema with the published category counts: 35 object
/// categories, 16 verb predicates, 5 person roles, 16 distinct object roles
/// and 12 distinct verb roles. Category and predicate names follow Action
/// Genome; role names and values are illustrative.
pub fn reference_schema() -> FrameStructure {
    let mut object_roles = BTreeMap::new();
    for (i, c) in AG_OBJECTS.iter().enumerate() {
        let len = 2 + i % 6;
        let roles = (0..len).map(|j| OBJECT_ROLES[(i + 3 * j) % 16].to_string()).collect::<Vec<_>>();
        object_roles.insert(c.to_string(), roles);
    }
    // every object role is used at least once
    object_roles.insert(
        AG_OBJECTS[34].to_string(),
        OBJECT_ROLES[9..16].iter().map(|s| s.to_string()).collect(),
    );
    object_roles.insert(
        AG_OBJECTS[33].to_string(),
        OBJECT_ROLES[2..9].iter().map(|s| s.to_string()).collect(),
    );
    let mut verb_roles = BTreeMap::new();
    for (i, v) in AG_VERBS.iter().enumerate() {
        let len = 2 + i % 6;
        let roles = (0..len).map(|j| VERB_ROLES[(i + 5 * j) % 12].to_string()).collect::<Vec<_>>();
        verb_roles.insert(v.to_string(), roles);
    }
    verb_roles.insert(
        AG_VERBS[15].to_string(),
        VERB_ROLES[5..12].iter().map(|s| s.to_string()).collect(),
    );
    let mut value_vocab = BTreeMap::new();
    for (i, r) in OBJECT_ROLES.iter().chain(&VERB_ROLES).chain(&PERSON_ROLES).enumerate() {
        value_vocab.insert(r.to_string(), role_values(r, 3 + i % 5));
    }
    let raw = SchemaFile {
        object_categories: AG_OBJECTS.iter().map(|s| s.to_string()).collect(),
        verb_predicates: AG_VERBS.iter().map(|s| s.to_string()).collect(),
        person_roles: PERSON_ROLES.iter().map(|s| s.to_string()).collect(),
        object_roles,
        verb_roles,
        value_vocab,
    };
    FrameStructure::from_schema_file(raw).expect("reference schema is valid")
}

/// Shape of a randomly generated schema.
#[derive(Debug, Clone)]
pub struct SchemaShape {
    pub categories: usize,
    pub predicates: usize,
    pub person_roles: usize,
    pub min_roles: usize,
    pub max_roles: usize,
    pub values_per_role: usize,
}

impl Default for SchemaShape {
    fn default() -> Self {
        SchemaShape {
            categories: 4,
            predicates: 4,
            person_roles: 3,
            min_roles: 2,
            max_roles: 4,
            values_per_role: 4,
        }
    }
}

/// Random schema whose role counts are drawn uniformly from
/// `[min_roles, max_roles]`.
pub fn random_schema(shape: &SchemaShape, seed: u64) -> FrameStructure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value_vocab = BTreeMap::new();
    let role_list = |prefix: &str, n: usize, value_vocab: &mut BTreeMap<String, Vec<String>>| {
        let roles: Vec<String> = (0..n).map(|j| format!("{prefix}_r{j}")).collect();
        for r in &roles {
            value_vocab.insert(r.clone(), role_values(r, shape.values_per_role));
        }
        roles
    };
    let object_categories: Vec<String> = (0..shape.categories).map(|i| format!("obj{i}")).collect();
    let verb_predicates: Vec<String> = (0..shape.predicates).map(|i| format!("verb{i}")).collect();
    let person_roles = role_list("person", shape.person_roles, &mut value_vocab);
    let mut object_roles = BTreeMap::new();
    for c in &object_categories {
        let n = rng.gen_range(shape.min_roles..=shape.max_roles);
        object_roles.insert(c.clone(), role_list(c, n, &mut value_vocab));
    }
    let mut verb_roles = BTreeMap::new();
    for p in &verb_predicates {
        let n = rng.gen_range(shape.min_roles..=shape.max_roles);
        verb_roles.insert(p.clone(), role_list(p, n, &mut value_vocab));
    }
    FrameStructure::from_schema_file(SchemaFile {
        object_categories,
        verb_predicates,
        person_roles,
        object_roles,
        verb_roles,
        value_vocab,
    })
    .expect("random schema is valid")
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub frames: usize,
    pub frames_per_video: usize,
    pub max_objects: usize,
    /// Relations per object are drawn from `1..=max_relations_per_object`.
    pub max_relations_per_object: usize,
    pub image_size: u32,
    /// When set, object and verb role values are functions of the
    /// (category, predicate) pair instead of independent draws.
    pub structured: bool,
    /// Probability that a training label is replaced by a random other one.
    pub label_noise: f64,
    pub unsure_rate: f64,
    pub action_classes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frames: 16,
            frames_per_video: 4,
            max_objects: 3,
            max_relations_per_object: 1,
            image_size: 24,
            structured: false,
            label_noise: 0.0,
            unsure_rate: 0.0,
            action_classes: 6,
        }
    }
}

impl SynthConfig {
    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }
}

/// Generated frames. `annotations` carry the (possibly noisy) training
/// labels; `clean` the labels before noise was injected.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub annotations: Vec<SsgAnnotation>,
    pub clean: Vec<SsgAnnotation>,
    pub images: Vec<RgbImage>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_box(rng: &mut ChaCha8Rng, size: u32) -> BBox {
    let s = i64::from(size);
    let w = rng.gen_range(2..=s / 2);
    let h = rng.gen_range(2..=s / 2);
    let x = rng.gen_range(0..=s - w);
    let y = rng.gen_range(0..=s - h);
    BBox::new(x, y, w, h)
}

fn fill_srv(
    rng: &mut ChaCha8Rng,
    schema: &FrameStructure,
    roles: &[String],
    unsure_rate: f64,
    pick: impl Fn(usize, &[String], &mut ChaCha8Rng) -> String,
) -> (IndexMap<String, String>, Vec<String>) {
    let mut srv = IndexMap::new();
    let mut unsure = Vec::new();
    for (j, role) in roles.iter().enumerate() {
        if unsure_rate > 0.0 && rng.gen_bool(unsure_rate) {
            unsure.push(role.clone());
            continue;
        }
        let values = schema.role_values(role);
        srv.insert(role.clone(), pick(j, values, rng));
    }
    (srv, unsure)
}

fn perturb(rng: &mut ChaCha8Rng, current: &str, candidates: &[String]) -> String {
    let others: Vec<&String> = candidates.iter().filter(|c| c.as_str() != current).collect();
    others.choose(rng).map(|s| s.to_string()).unwrap_or_else(|| current.to_string())
}

fn add_noise(rng: &mut ChaCha8Rng, schema: &FrameStructure, ann: &mut SsgAnnotation, p: f64) {
    if p <= 0.0 {
        return;
    }
    let noisy_srv = |rng: &mut ChaCha8Rng, srv: &mut IndexMap<String, String>| {
        for (role, value) in srv.iter_mut() {
            if rng.gen_bool(p) {
                *value = perturb(rng, value, schema.role_values(role));
            }
        }
    };
    noisy_srv(rng, &mut ann.person.srv);
    for o in &mut ann.objects {
        noisy_srv(rng, &mut o.srv);
    }
    for r in &mut ann.relations {
        noisy_srv(rng, &mut r.srv);
        if rng.gen_bool(p) {
            r.predicate = perturb(rng, &r.predicate, schema.verb_predicates());
            let roles = schema.verb_roles(schema.predicate_index(&r.predicate).unwrap());
            r.unsure.clear();
            r.srv = roles
                .iter()
                .map(|role| (role.clone(), schema.role_values(role).choose(rng).unwrap().clone()))
                .collect();
        }
    }
}

/// Generates `cfg.frames` valid frames with noise images.
pub fn generate_dataset(schema: &FrameStructure, cfg: &SynthConfig, seed: u64) -> SynthDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut annotations = Vec::with_capacity(cfg.frames);
    let mut clean = Vec::with_capacity(cfg.frames);
    let mut images = Vec::with_capacity(cfg.frames);
    let n_cat = schema.object_categories().len();
    let n_pred = schema.verb_predicates().len();

    for f in 0..cfg.frames {
        let size = cfg.image_size;
        let mut img = RgbImage::new(size, size);
        for p in img.pixels_mut() {
            *p = Rgb([rng.gen(), rng.gen(), rng.gen()]);
        }
        let person_box = random_box(&mut rng, size);
        let (srv, unsure) = fill_srv(&mut rng, schema, schema.person_roles(), cfg.unsure_rate, |_, vs, rng| {
            vs.choose(rng).unwrap().clone()
        });
        let person = PersonAnnotation {
            bbox: person_box,
            srv,
            unsure,
        };

        let n_obj = rng.gen_range(1..=cfg.max_objects.max(1));
        let mut objects = Vec::new();
        let mut relations = Vec::new();
        for k in 0..n_obj {
            let cat = rng.gen_range(0..n_cat);
            let n_rel = rng.gen_range(1..=cfg.max_relations_per_object.max(1));
            let mut preds: Vec<usize> = (0..n_pred).collect();
            preds.shuffle(&mut rng);
            preds.truncate(n_rel.min(n_pred));
            let first_pred = preds[0];
            let structured = cfg.structured;
            let (srv, unsure) = fill_srv(&mut rng, schema, schema.object_roles(cat), cfg.unsure_rate, |j, vs, rng| {
                if structured {
                    let h = mix(mix(cat as u64, first_pred as u64), j as u64);
                    vs[(h % vs.len() as u64) as usize].clone()
                } else {
                    vs.choose(rng).unwrap().clone()
                }
            });
            let instance_id = format!("o{k}");
            objects.push(ObjectAnnotation {
                instance_id: instance_id.clone(),
                category: schema.object_categories()[cat].clone(),
                bbox: random_box(&mut rng, size),
                srv,
                unsure,
            });
            for &p in &preds {
                let (srv, unsure) = fill_srv(&mut rng, schema, schema.verb_roles(p), cfg.unsure_rate, |j, vs, rng| {
                    if structured {
                        let h = mix(mix(p as u64 + 1000, cat as u64), j as u64);
                        vs[(h % vs.len() as u64) as usize].clone()
                    } else {
                        vs.choose(rng).unwrap().clone()
                    }
                });
                relations.push(RelationAnnotation {
                    object_instance_id: instance_id.clone(),
                    predicate: schema.verb_predicates()[p].clone(),
                    srv,
                    unsure,
                });
            }
        }
        let n_actions = rng.gen_range(1..=3.min(cfg.action_classes.max(1)));
        let mut actions: Vec<String> = (0..cfg.action_classes).map(|a| format!("c{a:03}")).collect();
        actions.shuffle(&mut rng);
        actions.truncate(n_actions);
        actions.sort();

        let video = f / cfg.frames_per_video.max(1);
        let ann = SsgAnnotation {
            video_id: format!("VID{video:03}"),
            frame_id: format!("{:06}.png", f),
            image_size: Some([size, size]),
            person,
            objects,
            relations,
            actions,
        };
        let mut noisy = ann.clone();
        add_noise(&mut rng, schema, &mut noisy, cfg.label_noise);
        clean.push(ann);
        annotations.push(noisy);
        images.push(img);
    }
    SynthDataset {
        annotations,
        clean,
        images,
    }
}
