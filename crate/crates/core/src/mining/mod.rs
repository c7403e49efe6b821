//! Frame labels and training-window mining from phone alignments.

mod alignment;
mod segments;

pub use alignment::{
    find_keyword_spans, format_alignments, frame_labels, load_alignments, parse_alignments, Alignment,
    KeywordSpan, KeywordSpec, PhoneSpan, MAX_EXTENSION,
};
pub use segments::{
    allocate_quota, compose_batch, format_manifest, mine_negative, mine_positive, mine_utterance,
    pad_noise_bank, parse_manifest, save_manifest, silence_column, MiningView, PadFill, Segment,
    SegmentKind, MANIFEST_HEADER, NEGATIVES_PER_UTTERANCE, NEGATIVE_QUOTA, PAD_NOISE_DBFS,
};
