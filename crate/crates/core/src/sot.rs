//! Serialized-output-training transcripts.
//!
//! Speaker transcripts are concatenated first-in first-out (by start time)
//! with the literal `<sc>` between consecutive speakers.

use crate::error::{Error, Result};
use crate::text_norm::{join_tokens, normalize_tokenize, Token};

pub const MARKER: &str = "<sc>";

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSegment {
    pub speaker_id: String,
    pub start_time: Option<f64>,
    pub tokens: Vec<Token>,
}

impl SpeakerSegment {
    pub fn new(speaker_id: impl Into<String>, start_time: f64, text: &str) -> Self {
        SpeakerSegment {
            speaker_id: speaker_id.into(),
            start_time: Some(start_time),
            tokens: normalize_tokenize(text),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SotTranscript {
    pub segments: Vec<SpeakerSegment>,
    /// Set when parsing met an empty side of a marker.
    pub malformed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MarkerPolicy {
    #[default]
    Drop,
    KeepAsToken,
}

/// Orders segments FIFO and joins them with markers.
pub fn serialize_sot(segments: &[SpeakerSegment]) -> Result<String> {
    if segments.is_empty() {
        return Err(Error::validation("cannot serialize an empty segment list"));
    }
    let mut ordered: Vec<(&SpeakerSegment, f64)> = Vec::with_capacity(segments.len());
    for seg in segments {
        let t = seg.start_time.ok_or_else(|| {
            Error::validation(format!("segment of {:?} has no start time", seg.speaker_id))
        })?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::validation(format!(
                "segment of {:?} has invalid start time {t}",
                seg.speaker_id
            )));
        }
        if seg.tokens.is_empty() {
            return Err(Error::validation(format!(
                "segment of {:?} has no words",
                seg.speaker_id
            )));
        }
        ordered.push((seg, t));
    }
    ordered.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0.speaker_id.cmp(&b.0.speaker_id))
    });
    let parts: Vec<String> = ordered
        .iter()
        .map(|(seg, _)| join_tokens(&seg.tokens, " "))
        .collect();
    Ok(parts.join(&format!(" {MARKER} ")))
}

/// Splits on markers and tokenizes each side. Speakers come back anonymous
/// (`spk0`, `spk1`, ...) in transcript order.
pub fn parse_sot(text: &str) -> SotTranscript {
    let mut out = SotTranscript::default();
    let mut saw_marker = false;
    for (i, side) in text.split(MARKER).enumerate() {
        if i > 0 {
            saw_marker = true;
        }
        let tokens = normalize_tokenize(side);
        if tokens.is_empty() {
            out.malformed = true;
            continue;
        }
        out.segments.push(SpeakerSegment {
            speaker_id: format!("spk{}", out.segments.len()),
            start_time: None,
            tokens,
        });
    }
    // A marker-free empty string is simply empty, not malformed.
    if !saw_marker && out.segments.is_empty() {
        out.malformed = false;
    }
    out
}

pub fn flatten_for_scoring(transcript: &SotTranscript, policy: MarkerPolicy) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, seg) in transcript.segments.iter().enumerate() {
        if i > 0 && policy == MarkerPolicy::KeepAsToken {
            out.push(Token::from_normalized(MARKER.to_owned()));
        }
        out.extend(seg.tokens.iter().cloned());
    }
    out
}

pub fn marker_count(text: &str) -> usize {
    text.matches(MARKER).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(seg: &SpeakerSegment) -> Vec<&str> {
        seg.tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn fifo_orders_by_start_time() {
        let segs = [
            SpeakerSegment::new("spkB", 1.2, "WORLD"),
            SpeakerSegment::new("spkA", 0.0, "HELLO THERE"),
        ];
        assert_eq!(serialize_sot(&segs).unwrap(), "HELLO THERE <sc> WORLD");
    }

    #[test]
    fn simultaneous_starts_break_by_speaker_id() {
        let segs = [
            SpeakerSegment::new("b", 1.0, "SECOND"),
            SpeakerSegment::new("a", 1.0, "FIRST"),
        ];
        assert_eq!(serialize_sot(&segs).unwrap(), "FIRST <sc> SECOND");
    }

    #[test]
    fn marker_count_matches_speakers() {
        let one = serialize_sot(&[SpeakerSegment::new("a", 0.0, "X")]).unwrap();
        assert_eq!(marker_count(&one), 0);
        let three = serialize_sot(&[
            SpeakerSegment::new("a", 0.0, "X"),
            SpeakerSegment::new("b", 1.0, "Y"),
            SpeakerSegment::new("c", 2.0, "Z"),
        ])
        .unwrap();
        assert_eq!(marker_count(&three), 2);
    }

    #[test]
    fn serialize_rejects_bad_input() {
        assert!(serialize_sot(&[]).is_err());
        let mut seg = SpeakerSegment::new("a", 0.0, "X");
        seg.start_time = None;
        assert!(serialize_sot(&[seg]).is_err());
        assert!(serialize_sot(&[SpeakerSegment::new("a", -1.0, "X")]).is_err());
        assert!(serialize_sot(&[SpeakerSegment::new("a", 0.0, "...")]).is_err());
    }

    #[test]
    fn parses_segments() {
        let t = parse_sot("HELLO <sc> WORLD");
        assert_eq!(t.segments.len(), 2);
        assert_eq!(words(&t.segments[0]), ["HELLO"]);
        assert_eq!(words(&t.segments[1]), ["WORLD"]);
        assert!(!t.malformed);

        let t = parse_sot("HELLO");
        assert_eq!(t.segments.len(), 1);
        assert!(!t.malformed);
    }

    #[test]
    fn empty_sides_are_flagged() {
        let t = parse_sot("<sc> HELLO <sc>");
        assert_eq!(t.segments.len(), 1);
        assert_eq!(words(&t.segments[0]), ["HELLO"]);
        assert!(t.malformed);

        let t = parse_sot("");
        assert!(t.segments.is_empty());
        assert!(!t.malformed);
    }

    #[test]
    fn flatten_policies() {
        let t = parse_sot("A <sc> B");
        assert_eq!(flatten_for_scoring(&t, MarkerPolicy::Drop), ["A", "B"]);
        assert_eq!(
            flatten_for_scoring(&t, MarkerPolicy::KeepAsToken),
            ["A", "<sc>", "B"]
        );
        assert!(flatten_for_scoring(&parse_sot(""), MarkerPolicy::default()).is_empty());
    }

    #[test]
    fn markers_need_no_surrounding_space() {
        let t = parse_sot("HELLO<sc>WORLD");
        assert_eq!(t.segments.len(), 2);
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(
            segs in prop::collection::vec(
                (0u32..50, prop::collection::vec("[A-Z]{1,6}", 1..5)),
                1..5,
            )
        ) {
            let input: Vec<SpeakerSegment> = segs
                .iter()
                .enumerate()
                .map(|(i, (t, ws))| SpeakerSegment::new(format!("s{i}"), *t as f64 / 10.0, &ws.join(" ")))
                .collect();
            let text = serialize_sot(&input).unwrap();
            prop_assert_eq!(marker_count(&text), input.len() - 1);

            let mut expected = input.clone();
            expected.sort_by(|a, b| a.start_time.unwrap().total_cmp(&b.start_time.unwrap())
                .then_with(|| a.speaker_id.cmp(&b.speaker_id)));
            let parsed = parse_sot(&text);
            prop_assert!(!parsed.malformed);
            let got: Vec<_> = parsed.segments.iter().map(|s| s.tokens.clone()).collect();
            let want: Vec<_> = expected.iter().map(|s| s.tokens.clone()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
