//! Downstream tasks built on SSGs: multiple-choice question generation and
//! scoring, situation-recognition evaluation, and video action recognition.

mod action;
mod mcq;
mod sitrec;

pub use action::{
    action_vocabulary, build_action_sequence, frame_text_tokens, train_action_classifier, video_labels,
    ActionCheckpoint, ActionClassifier, ActionClassifierConfig, ActionSequence, ActionSequenceConfig,
    ActionTrainConfig, ACTION_CHECKPOINT_FORMAT, ACTION_TOKEN_DIM,
};
pub use mcq::{
    expected_question_count, generate_mcq, parse_jsonl, score_mcq, write_key, write_questions, AnswerRecord,
    KeyRecord, McqItem, McqPolicy, McqScore, McqTask, QuestionRecord, ANSWER_INSTRUCTION,
};
pub use sitrec::situation_recognition_eval;
