use image::RgbImage;

use crate::embed::{EmbeddingBackend, EmbeddingVector};
use crate::error::{Result, SsgError};
use crate::prompt::{apply_prompt, PromptSpec, Region};
use crate::schema::{EntityKind, FrameStructure, SsgAnnotation, PERSON_TEXT};

/// Text embeddings of every name the pipeline feeds to an encoder.
#[derive(Debug, Clone)]
pub struct TextBank {
    pub dim: usize,
    pub person: EmbeddingVector,
    pub categories: Vec<EmbeddingVector>,
    pub object_roles: Vec<Vec<EmbeddingVector>>,
    pub verb_roles: Vec<Vec<EmbeddingVector>>,
    pub person_roles: Vec<EmbeddingVector>,
}

impl TextBank {
    pub fn build(schema: &FrameStructure, backend: &dyn EmbeddingBackend) -> Result<Self> {
        let embed_all = |names: &[String]| -> Result<Vec<EmbeddingVector>> {
            names.iter().map(|n| backend.embed_text(n)).collect()
        };
        let categories = embed_all(schema.object_categories())?;
        let object_roles = (0..schema.object_categories().len())
            .map(|c| embed_all(schema.object_roles(c)))
            .collect::<Result<_>>()?;
        let verb_roles = (0..schema.verb_predicates().len())
            .map(|p| embed_all(schema.verb_roles(p)))
            .collect::<Result<_>>()?;
        Ok(TextBank {
            dim: backend.dim(),
            person: backend.embed_text(PERSON_TEXT)?,
            categories,
            object_roles,
            verb_roles,
            person_roles: embed_all(schema.person_roles())?,
        })
    }
}

/// Prompted-frame embeddings of one annotated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    /// Person box prompt.
    pub person: EmbeddingVector,
    /// One per object, object box prompt.
    pub objects: Vec<EmbeddingVector>,
    /// One per relation, union of person and object boxes.
    pub relations: Vec<EmbeddingVector>,
}

/// Builds the prompted frames of `ann` from its image and embeds them.
pub fn frame_features(
    ann: &SsgAnnotation,
    image: &RgbImage,
    backend: &dyn EmbeddingBackend,
    prompt: &PromptSpec,
) -> Result<FrameFeatures> {
    let embed = |region: Region| -> Result<EmbeddingVector> {
        let prompted = apply_prompt(image, &region, prompt)?;
        backend.embed_image(&prompted)
    };
    let person = embed(Region::single(ann.person.bbox))?;
    let objects = ann
        .objects
        .iter()
        .map(|o| embed(Region::single(o.bbox)))
        .collect::<Result<Vec<_>>>()?;
    let relations = ann
        .relations
        .iter()
        .map(|r| {
            let (_, o) = ann.object(&r.object_instance_id).ok_or_else(|| {
                SsgError::Misaligned(format!("relation references unknown object '{}'", r.object_instance_id))
            })?;
            embed(Region::union(ann.person.bbox, o.bbox))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameFeatures {
        person,
        objects,
        relations,
    })
}

/// Model input for one frame: ground-truth boxes and categories plus
/// prompted-frame features.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub categories: Vec<usize>,
    /// Object index of each relation.
    pub relation_objects: Vec<usize>,
    /// Ground-truth predicate of each relation, when known.
    pub gt_predicates: Vec<Option<usize>>,
    pub features: FrameFeatures,
}

impl FrameInput {
    pub fn new(ann: &SsgAnnotation, schema: &FrameStructure, features: FrameFeatures) -> Result<Self> {
        if features.objects.len() != ann.objects.len() || features.relations.len() != ann.relations.len() {
            return Err(SsgError::MissingFrame(format!(
                "frame {}: feature count does not match annotation",
                ann.frame_id
            )));
        }
        let categories = ann
            .objects
            .iter()
            .map(|o| {
                schema
                    .category_index(&o.category)
                    .ok_or_else(|| SsgError::Misaligned(format!("unknown category '{}'", o.category)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut relation_objects = Vec::new();
        let mut gt_predicates = Vec::new();
        for r in &ann.relations {
            let (idx, _) = ann
                .object(&r.object_instance_id)
                .ok_or_else(|| SsgError::Misaligned(format!("unknown object '{}'", r.object_instance_id)))?;
            relation_objects.push(idx);
            gt_predicates.push(schema.predicate_index(&r.predicate));
        }
        Ok(FrameInput {
            categories,
            relation_objects,
            gt_predicates,
            features,
        })
    }
}

/// Class-index targets for one frame. `None` marks a position that does not
/// contribute to the loss (padding or unsure role).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTargets {
    pub objects: Vec<Vec<Option<usize>>>,
    pub verbs: Vec<usize>,
    pub verb_roles: Vec<Vec<Option<usize>>>,
    pub person: Vec<Option<usize>>,
}

fn role_targets(
    schema: &FrameStructure,
    kind: EntityKind,
    roles: &[String],
    srv: &indexmap::IndexMap<String, String>,
    unsure: &[String],
    width: usize,
) -> Result<Vec<Option<usize>>> {
    let vocab = schema.vocab(kind);
    let mut out = vec![None; width];
    for (j, role) in roles.iter().enumerate() {
        if unsure.contains(role) {
            continue;
        }
        if let Some(v) = srv.get(role) {
            out[j] = Some(
                vocab
                    .index_of(v)
                    .ok_or_else(|| SsgError::Misaligned(format!("value '{v}' not in {} vocabulary", kind.as_str())))?,
            );
        }
    }
    Ok(out)
}

impl FrameTargets {
    pub fn new(ann: &SsgAnnotation, schema: &FrameStructure) -> Result<Self> {
        let x = schema.max_object_roles();
        let y = schema.max_verb_roles();
        let objects = ann
            .objects
            .iter()
            .map(|o| {
                let c = schema
                    .category_index(&o.category)
                    .ok_or_else(|| SsgError::Misaligned(format!("unknown category '{}'", o.category)))?;
                role_targets(schema, EntityKind::Object, schema.object_roles(c), &o.srv, &o.unsure, x)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut verbs = Vec::new();
        let mut verb_roles = Vec::new();
        for r in &ann.relations {
            let p = schema
                .predicate_index(&r.predicate)
                .ok_or_else(|| SsgError::Misaligned(format!("unknown predicate '{}'", r.predicate)))?;
            verbs.push(p);
            verb_roles.push(role_targets(schema, EntityKind::Verb, schema.verb_roles(p), &r.srv, &r.unsure, y)?);
        }
        let person = role_targets(
            schema,
            EntityKind::Person,
            schema.person_roles(),
            &ann.person.srv,
            &ann.person.unsure,
            schema.person_role_count(),
        )?;
        Ok(FrameTargets {
            objects,
            verbs,
            verb_roles,
            person,
        })
    }
}

/// Everything the trainer needs for one frame.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub input: FrameInput,
    pub targets: FrameTargets,
}

/// Embeds and encodes annotated frames with their images.
pub fn prepare_examples(
    annotations: &[SsgAnnotation],
    images: &[RgbImage],
    schema: &FrameStructure,
    backend: &dyn EmbeddingBackend,
    prompt: &PromptSpec,
) -> Result<Vec<TrainingExample>> {
    if annotations.len() != images.len() {
        return Err(SsgError::MissingFrame(format!(
            "{} annotations but {} images",
            annotations.len(),
            images.len()
        )));
    }
    annotations
        .iter()
        .zip(images)
        .map(|(ann, img)| {
            let features = frame_features(ann, img, backend, prompt)?;
            Ok(TrainingExample {
                input: FrameInput::new(ann, schema, features)?,
                targets: FrameTargets::new(ann, schema)?,
            })
        })
        .collect()
}
