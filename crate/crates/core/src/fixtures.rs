//! Sample chains used by tests, benches and documentation.
//!
//! The four chains are published dataset samples. Only the pancakes chain
//! comes with a published knowledge sentence; the knowledge attached to the
//! KIR steps of the other three is written to match their KIR step text.

use crate::chain::{Attribute, Category, ReasoningChain, ReasoningStep, StepTag, Subcategory};

fn chain(
    id: &str,
    attribute: Attribute,
    implicit: &str,
    explicit: &str,
    non_offensive: &str,
    steps: Vec<ReasoningStep>,
) -> ReasoningChain {
    ReasoningChain {
        id: id.to_string(),
        attribute,
        implicit: implicit.to_string(),
        explicit: explicit.to_string(),
        non_offensive: non_offensive.to_string(),
        steps,
        extra: Default::default(),
    }
}

pub fn pancakes() -> ReasoningChain {
    use StepTag::*;
    chain(
        "pancakes",
        Attribute::new(
            "I eat lots of pancakes and syrup.",
            Category::Have,
            Some(Subcategory::HaveOther),
        ),
        "That can indeed give you extra energy.",
        "You are fat.",
        "I love pancakes, too.",
        vec![
            ReasoningStep::new("Pancakes and syrup can indeed give you extra energy.", Air),
            ReasoningStep::new("You got extra energy from eating.", Rr),
            ReasoningStep::new("You eat too much.", Rr),
            ReasoningStep::kir(
                "You eat too much which makes you fat.",
                "Eating too much can make people fat.",
            ),
            ReasoningStep::new("You are fat.", Rr),
        ],
    )
}

pub fn guitar() -> ReasoningChain {
    use StepTag::*;
    chain(
        "guitar",
        Attribute::new("I am a guitar player.", Category::Am, Some(Subcategory::AmNoun)),
        "Oh did you learn that by yourself?",
        "Your guitar skills are awful.",
        "That's why you are so good at music.",
        vec![
            ReasoningStep::new("Did you learn guitar by yourself?", Air),
            ReasoningStep::new("You must have learned guitar by yourself.", Rr),
            ReasoningStep::kir(
                "You must have learned guitar by yourself because you don't look so professional.",
                "People who learn guitar by themselves don't look professional.",
            ),
            ReasoningStep::new("You are not professional at guitar.", Rr),
            ReasoningStep::new("Your guitar skills are awful.", Rr),
        ],
    )
}

pub fn contacts() -> ReasoningChain {
    use StepTag::*;
    chain(
        "contacts",
        Attribute::new("I wear contacts.", Category::Have, Some(Subcategory::HaveOther)),
        "Another reason why I'm scared to get old.",
        "You are so old.",
        "I usually wear glasses.",
        vec![
            ReasoningStep::new("Wearing contacts is another reason why I'm scared to get old.", Air),
            ReasoningStep::new(
                "I'm scared to get old because I don't want to wear contacts like you.",
                Rr,
            ),
            ReasoningStep::kir(
                "I'm scared to get old because old people wear contacts like you.",
                "Old people wear contacts.",
            ),
            ReasoningStep::new("Old people like you wear contacts like you.", Rr),
            ReasoningStep::new("You are so old.", Rr),
        ],
    )
}

pub fn small_town() -> ReasoningChain {
    use StepTag::*;
    chain(
        "small-town",
        Attribute::new(
            "I come from a small town.",
            Category::Have,
            Some(Subcategory::HaveOther),
        ),
        "Are you coming here for higher education?",
        "You are uneducated, then.",
        "I always want to move to a small town.",
        vec![
            ReasoningStep::new("Are you coming to this big city for higher education?", Air),
            ReasoningStep::new("You come to this big city for higher education.", Rr),
            ReasoningStep::kir(
                "You come to this big city because you couldn't get enough education in the small town.",
                "Small towns can't provide enough education.",
            ),
            ReasoningStep::new("You couldn't get enough education in the small town.", Rr),
            ReasoningStep::new("You don't get enough education.", Rr),
            ReasoningStep::new("You are uneducated.", Rr),
        ],
    )
}

/// The four sample chains in publication order.
pub fn sample_chains() -> Vec<ReasoningChain> {
    vec![pancakes(), guitar(), contacts(), small_town()]
}
