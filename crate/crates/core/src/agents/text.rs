//! Parsers for the closed question and answer grammar. Free text outside it is rejected.

use super::{Answer, Question};
use crate::error::{Error, Result};
use crate::world::{Descriptor, Scene};

fn clean(text: &str) -> String {
    text.trim()
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn strip_article(s: &str) -> &str {
    ["the ", "a ", "an "].iter().find_map(|a| s.strip_prefix(a)).unwrap_or(s)
}

/// Resolves a phrase such as "the pink candle" against the scene's descriptor vocabulary.
pub fn parse_descriptor(phrase: &str, scene: &Scene) -> Result<Descriptor> {
    let p = clean(phrase);
    let p = strip_article(&p);
    scene
        .descriptor_vocabulary()
        .into_iter()
        .find(|d| d.to_string().to_lowercase() == p)
        .ok_or_else(|| Error::Parse { kind: "descriptor", text: phrase.to_string() })
}

/// Accepts "Yes", "No", "No, I want the X", "No, the X seems better for me" and "No, X".
pub fn parse_answer(text: &str, scene: &Scene) -> Result<Answer> {
    let t = clean(text);
    let err = || Error::Parse { kind: "answer", text: text.to_string() };
    match t.as_str() {
        "yes" | "yes please" | "yeah" => return Ok(Answer::yes()),
        "no" | "nope" => return Ok(Answer::no()),
        _ => {}
    }
    let rest = t.strip_prefix("no,").or_else(|| t.strip_prefix("no ")).ok_or_else(err)?.trim();
    let phrase = rest
        .strip_prefix("i want ")
        .or_else(|| rest.strip_suffix(" seems better for me"))
        .or_else(|| rest.strip_suffix(" is better for me"))
        .unwrap_or(rest);
    let d = parse_descriptor(phrase, scene).map_err(|_| err())?;
    Ok(Answer::corrective(d))
}

/// Parses "Should I get the X?"; the referent is the first object the descriptor matches.
pub fn parse_question(text: &str, scene: &Scene) -> Result<Question> {
    let err = || Error::Parse { kind: "question", text: text.to_string() };
    let t = clean(text);
    let phrase = t.strip_prefix("should i get ").ok_or_else(err)?;
    let d = parse_descriptor(phrase, scene).map_err(|_| err())?;
    let obj = scene.objects.iter().find(|o| d.matches(o)).ok_or_else(err)?;
    Ok(Question::new(d, obj.bbox))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Polarity;
    use crate::world::fixtures::candles;

    #[test]
    fn answer_forms() {
        let s = candles();
        assert_eq!(parse_answer("Yes", &s).unwrap(), Answer::yes());
        assert_eq!(parse_answer(" no. ", &s).unwrap(), Answer::no());
        let pink = Descriptor::with("candle", "color", "pink");
        for t in ["No, I want the pink candle", "No, the pink candle seems better for me", "no, pink candle"] {
            let a = parse_answer(t, &s).unwrap();
            assert_eq!(a.polarity, Polarity::No);
            assert_eq!(a.correction.as_ref(), Some(&pink), "{t}");
            assert_eq!(a.text, "No, I want the pink candle");
        }
        assert!(parse_answer("maybe", &s).is_err());
        assert!(parse_answer("No, I want the purple elephant", &s).is_err());
    }

    #[test]
    fn rendered_text_parses_back() {
        let s = candles();
        for d in s.descriptor_vocabulary() {
            let a = Answer::corrective(d);
            assert_eq!(parse_answer(&a.text, &s).unwrap(), a);
        }
    }

    #[test]
    fn question_form() {
        let s = candles();
        let q = parse_question("Should I get the pink candle?", &s).unwrap();
        assert_eq!(q.referent_box, s.objects[1].bbox);
        assert_eq!(q.text, "Should I get the pink candle?");
        assert!(parse_question("Where is the candle?", &s).is_err());
    }
}
