//! Desk-scale generator: word-level tokenizer, additive-smoothed n-gram
//! model trained by counting, and decoding.

mod decode;
mod ngram;
mod vocab;

pub use decode::{decode_with, generate, strip_eos, DecodeMode, GenerationConfig, DEFAULT_MAX_LEN};
pub use ngram::{
    cross_entropy, join_prompt_response, next_logits, perplexity, perplexity_of_ids,
    response_perplexity, train_lm, train_lm_conditional, LogitsProvider, NGramModel, DEFAULT_ALPHA,
    DEFAULT_ORDER,
};
pub use vocab::{
    split_words, TokenId, Vocabulary, BOS, BOS_ID, DEFAULT_VOCAB_SIZE, EOS, EOS_ID, UNK, UNK_ID,
};
