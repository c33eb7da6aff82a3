//! Deterministic in-process editor implementing the stamp contract.
//!
//! Every pathology concept owns a disjoint 24×24 region on a fixed grid
//! (slot = vocabulary index, skipping Unremarkable). An edit writes each
//! prompted concept's pattern into its region and leaves every other pixel
//! untouched; describe reports the concepts whose region matches the pattern
//! exactly. The layout and patterns are pinned in
//! `fixtures/stamp_contract.json`.

use serde::{Deserialize, Serialize};

use super::{DescribeResponse, EditRequest, EditResponse, EditorBackend, GatewayError, ImageGray};
use crate::concept::ConceptVocabulary;
use crate::perturb::stable_hash;

pub const STAMP_CONTRACT_VERSION: u32 = 1;
pub const STAMP_SIZE: u32 = 24;
pub const STAMP_PITCH: u32 = 32;
pub const STAMP_MARGIN: u32 = 8;

/// Where one concept's stamp goes and what it looks like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StampSpec {
    pub concept_id: String,
    pub slot: u32,
    /// Column and row in the slot grid.
    pub grid: (u32, u32),
    pub pattern_hex: String,
}

/// Serializable form of the full contract, as stored in the golden file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StampContract {
    pub version: u32,
    pub stamp_size: u32,
    pub pitch: u32,
    pub margin: u32,
    pub grid_columns: u32,
    pub stamps: Vec<StampSpec>,
}

/// Number of grid columns; fixed so the layout does not depend on image size.
pub const GRID_COLUMNS: u32 = 8;

/// The 576-byte pattern for a concept id (xorshift64* keyed by FNV-1a).
pub fn stamp_pattern(concept_id: &str) -> Vec<u8> {
    let mut state = stable_hash(concept_id) | 1;
    (0..STAMP_SIZE * STAMP_SIZE)
        .map(|_| {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 56) as u8
        })
        .collect()
}

/// Top-left pixel of a slot.
pub fn slot_origin(slot: u32) -> (u32, u32) {
    (
        STAMP_MARGIN + (slot % GRID_COLUMNS) * STAMP_PITCH,
        STAMP_MARGIN + (slot / GRID_COLUMNS) * STAMP_PITCH,
    )
}

pub fn stamp_contract(vocab: &ConceptVocabulary) -> StampContract {
    let stamps = pathology_slots(vocab)
        .map(|(slot, i)| {
            let id = &vocab.concept(i).id;
            StampSpec {
                concept_id: id.clone(),
                slot,
                grid: (slot % GRID_COLUMNS, slot / GRID_COLUMNS),
                pattern_hex: stamp_pattern(id)
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect(),
            }
        })
        .collect();
    StampContract {
        version: STAMP_CONTRACT_VERSION,
        stamp_size: STAMP_SIZE,
        pitch: STAMP_PITCH,
        margin: STAMP_MARGIN,
        grid_columns: GRID_COLUMNS,
        stamps,
    }
}

/// (slot, concept index) for every non-Unremarkable concept.
fn pathology_slots(vocab: &ConceptVocabulary) -> impl Iterator<Item = (u32, usize)> + '_ {
    (0..vocab.len())
        .filter(move |&i| i != vocab.unremarkable_index())
        .enumerate()
        .map(|(slot, i)| (slot as u32, i))
}

#[derive(Debug, Clone)]
pub struct MockEditor {
    vocab: ConceptVocabulary,
    patterns: Vec<(u32, usize, Vec<u8>)>,
}

impl MockEditor {
    pub fn new(vocab: ConceptVocabulary) -> Self {
        let patterns = pathology_slots(&vocab)
            .map(|(slot, i)| (slot, i, stamp_pattern(&vocab.concept(i).id)))
            .collect();
        Self { vocab, patterns }
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocab
    }

    /// Smallest image size that hosts every slot of this vocabulary.
    pub fn min_dimensions(&self) -> (u32, u32) {
        let slots = self.patterns.len() as u32;
        let cols = slots.clamp(1, GRID_COLUMNS);
        let rows = slots.div_ceil(GRID_COLUMNS).max(1);
        (
            STAMP_MARGIN + (cols - 1) * STAMP_PITCH + STAMP_SIZE,
            STAMP_MARGIN + (rows - 1) * STAMP_PITCH + STAMP_SIZE,
        )
    }

    fn check_fits(&self, image: &ImageGray) -> Result<(), GatewayError> {
        let (min_w, min_h) = self.min_dimensions();
        if image.width() < min_w || image.height() < min_h {
            return Err(GatewayError::BackendRejected(format!(
                "image {}x{} is smaller than the stamp layout ({min_w}x{min_h})",
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    fn region_matches(image: &ImageGray, slot: u32, pattern: &[u8]) -> bool {
        let (x0, y0) = slot_origin(slot);
        (0..STAMP_SIZE).all(|dy| {
            (0..STAMP_SIZE)
                .all(|dx| image.get(x0 + dx, y0 + dy) == pattern[(dy * STAMP_SIZE + dx) as usize])
        })
    }

    /// Applies the stamps for every concept named in `prompt`.
    pub fn apply(&self, image: &ImageGray, prompt: &str) -> Result<ImageGray, GatewayError> {
        self.check_fits(image)?;
        let concepts = self.vocab.annotate_report(prompt);
        let mut edited = image.clone();
        for (slot, i, pattern) in &self.patterns {
            if !concepts.get(*i) {
                continue;
            }
            let (x0, y0) = slot_origin(*slot);
            for dy in 0..STAMP_SIZE {
                for dx in 0..STAMP_SIZE {
                    edited.set(x0 + dx, y0 + dy, pattern[(dy * STAMP_SIZE + dx) as usize]);
                }
            }
        }
        Ok(edited)
    }

    /// Display phrases of the stamped concepts, or the Unremarkable phrase.
    pub fn detect(&self, image: &ImageGray) -> Result<String, GatewayError> {
        self.check_fits(image)?;
        let found: Vec<&str> = self
            .patterns
            .iter()
            .filter(|(slot, _, pattern)| Self::region_matches(image, *slot, pattern))
            .map(|(_, i, _)| self.vocab.concept(*i).display_phrase.as_str())
            .collect();
        Ok(if found.is_empty() {
            self.vocab
                .concept(self.vocab.unremarkable_index())
                .display_phrase
                .clone()
        } else {
            found.join(", ")
        })
    }
}

impl EditorBackend for MockEditor {
    fn edit(&self, req: &EditRequest) -> Result<EditResponse, GatewayError> {
        Ok(EditResponse {
            request_id: req.request_id().to_string(),
            edited: self.apply(req.image(), req.prompt())?,
            backend_info: format!("mock-stamp/v{STAMP_CONTRACT_VERSION}"),
        })
    }

    fn describe(
        &self,
        request_id: &str,
        image: &ImageGray,
    ) -> Result<DescribeResponse, GatewayError> {
        Ok(DescribeResponse {
            request_id: request_id.to_string(),
            description: self.detect(image)?,
        })
    }

    fn name(&self) -> String {
        format!("mock-stamp/v{STAMP_CONTRACT_VERSION}")
    }
}
