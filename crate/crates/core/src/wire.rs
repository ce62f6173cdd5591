//! Newline-delimited JSON realization of the solicit/feedback dataflow.
//!
//! One TCP connection is one session: the analyst sends a Solicit built
//! from the disclosure (biases and, for sub-sampling, ratios; never latent
//! vectors), the user agent replies with obfuscated Feedback, the analyst
//! answers with the Estimate. No message schema has a field that could
//! carry the private label: the privacy boundary is structural, not
//! behavioral.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, Label};
use crate::error::{Error, Result};
use crate::factorization::{AnalystModel, ExtendedItemProfile};
use crate::protocol::{
    estimate_profile, mp_disclose, mp_obfuscate, mpss_disclose, mpss_obfuscate, DisclosedItem,
    Disclosure, ObfuscatedFeedback,
};
use crate::seed;
use crate::selection::{greedy_select, Candidate, SelectionProblem};

/// Error codes carried by wire-level Error messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireErrorCode {
    /// The line was not a well-formed message.
    Parse,
    /// A well-formed message that breaks the session contract (wrong
    /// message kind, unknown session, unsolicited items).
    ProtocolViolation,
    /// Feedback with inconsistent or unusable contents.
    BadFeedback,
}

/// One line on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Solicit { session_id: u64, items: Vec<DisclosedItem> },
    Feedback { session_id: u64, revealed: Vec<ItemId>, values: Vec<f64> },
    Estimate { session_id: u64, x_hat: Vec<f64> },
    Error { code: WireErrorCode, detail: String },
}

/// Serializes one message and a trailing newline.
pub fn write_message<W: Write>(sink: &mut W, message: &WireMessage) -> Result<()> {
    serde_json::to_writer(&mut *sink, message)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

/// Reads one newline-terminated message; None at end of stream.
pub fn read_message<R: BufRead>(source: &mut R) -> Result<Option<WireMessage>> {
    let mut line = String::new();
    if source.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(line.trim_end())?))
}

/// Which protocol the session speaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireProtocol {
    Mp,
    Mpss,
}

impl FromStr for WireProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<WireProtocol> {
        match s {
            "mp" => Ok(WireProtocol::Mp),
            "mpss" => Ok(WireProtocol::Mpss),
            other => Err(Error::InvalidArgument(format!(
                "unknown protocol {other:?}; expected mp or mpss"
            ))),
        }
    }
}

/// Analyst service configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServeConfig {
    pub protocol: WireProtocol,
    /// Solicit at most this many items, chosen by seeded greedy selection;
    /// None solicits the whole catalog.
    pub budget: Option<usize>,
    /// Ridge for the profile estimate.
    pub ridge: f64,
    /// Serve this many sessions and return; None serves until the listener
    /// fails.
    pub max_sessions: Option<usize>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { protocol: WireProtocol::Mp, budget: None, ridge: 1e-8, max_sessions: None }
    }
}

/// Immutable per-service state shared by all sessions.
struct SessionContext {
    disclosure: Disclosure,
    solicited: BTreeSet<ItemId>,
    profiles: Vec<ExtendedItemProfile>,
    ridge: f64,
    sigma: f64,
}

fn build_context(model: &AnalystModel, config: &ServeConfig) -> Result<SessionContext> {
    model.validate()?;
    let ids: Vec<ItemId> = match config.budget {
        Some(budget) if budget < model.items.len() => {
            let candidates: Vec<Candidate> = model
                .items
                .iter()
                .map(|item| Candidate { id: item.id, latent: item.latent.clone() })
                .collect();
            let seed_set = crate::selection::default_seed_set(&candidates);
            if budget < seed_set.len() {
                return Err(Error::InvalidArgument(format!(
                    "budget {budget} cannot cover the {}-item spanning seed set",
                    seed_set.len()
                )));
            }
            let problem =
                SelectionProblem::new(candidates, budget - seed_set.len(), seed_set.clone())?;
            let mut ids = greedy_select(&problem)?;
            ids.extend_from_slice(&seed_set);
            ids.sort_unstable();
            ids
        }
        _ => model.items.iter().map(|item| item.id).collect(),
    };
    let profiles = model.profiles(&ids)?;
    let disclosure = match config.protocol {
        WireProtocol::Mp => mp_disclose(&profiles)?,
        WireProtocol::Mpss => {
            let probs: Vec<(f64, f64)> = ids
                .iter()
                .map(|&id| {
                    let item = model.item(id).expect("ids from the model");
                    (item.p_plus, item.p_minus)
                })
                .collect();
            mpss_disclose(&profiles, &probs)?
        }
    };
    Ok(SessionContext {
        disclosure,
        solicited: ids.into_iter().collect(),
        profiles,
        ridge: config.ridge,
        sigma: model.noise_sigma_hat,
    })
}

fn reply_error<W: Write>(sink: &mut W, code: WireErrorCode, detail: String) {
    let _ = write_message(sink, &WireMessage::Error { code, detail });
}

fn handle_session(stream: TcpStream, ctx: &SessionContext, session_id: u64) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    write_message(
        &mut writer,
        &WireMessage::Solicit { session_id, items: ctx.disclosure.items.clone() },
    )?;
    let message = match read_message(&mut reader) {
        Ok(Some(m)) => m,
        Ok(None) => return Ok(()),
        Err(e) => {
            reply_error(&mut writer, WireErrorCode::Parse, e.to_string());
            return Ok(());
        }
    };
    let (sid, revealed, values) = match message {
        WireMessage::Feedback { session_id, revealed, values } => (session_id, revealed, values),
        other => {
            reply_error(
                &mut writer,
                WireErrorCode::ProtocolViolation,
                format!("expected feedback, got {other:?}"),
            );
            return Ok(());
        }
    };
    if sid != session_id {
        reply_error(
            &mut writer,
            WireErrorCode::ProtocolViolation,
            format!("feedback for session {sid} on session {session_id}"),
        );
        return Ok(());
    }
    if let Some(unknown) = revealed.iter().find(|id| !ctx.solicited.contains(id)) {
        reply_error(
            &mut writer,
            WireErrorCode::ProtocolViolation,
            format!("item {unknown} was not solicited"),
        );
        return Ok(());
    }
    let feedback = match ObfuscatedFeedback::new(revealed, values) {
        Ok(fb) => fb,
        Err(e) => {
            reply_error(&mut writer, WireErrorCode::BadFeedback, e.to_string());
            return Ok(());
        }
    };
    if feedback.values.iter().any(|v| !v.is_finite()) {
        reply_error(&mut writer, WireErrorCode::BadFeedback, "non-finite value".to_string());
        return Ok(());
    }
    match estimate_profile(&ctx.profiles, &feedback, ctx.ridge, ctx.sigma) {
        Ok(estimate) => {
            write_message(&mut writer, &WireMessage::Estimate { session_id, x_hat: estimate.x_hat })
        }
        Err(e) => {
            reply_error(&mut writer, WireErrorCode::BadFeedback, e.to_string());
            Ok(())
        }
    }
}

/// Runs the analyst service on an already-bound listener.
///
/// The solicited set is selected once; each connection is one session
/// (Solicit, Feedback, Estimate) on its own thread over the shared
/// read-only context. With `max_sessions` set the call returns after that
/// many sessions have completed.
pub fn analyst_serve(
    listener: &TcpListener,
    model: &AnalystModel,
    config: &ServeConfig,
) -> Result<()> {
    let ctx = build_context(model, config)?;
    let counter = AtomicU64::new(1);
    std::thread::scope(|scope| -> Result<()> {
        let mut served = 0usize;
        loop {
            if let Some(max) = config.max_sessions {
                if served >= max {
                    return Ok(());
                }
            }
            let (stream, _) = listener.accept()?;
            let session_id = counter.fetch_add(1, Ordering::Relaxed);
            let ctx = &ctx;
            scope.spawn(move || {
                let _ = handle_session(stream, ctx, session_id);
            });
            served += 1;
        }
    })
}

/// Runs one user-agent session and returns the received estimate.
///
/// The private label only parameterizes the local obfuscation; the Feedback
/// schema has no field that could carry it. Under MP every solicited item
/// must be rated; under MPSS the rated subset is used and the Solicit must
/// carry ratios.
pub fn user_agent_run<A: ToSocketAddrs>(
    ratings: &BTreeMap<ItemId, f64>,
    label: Label,
    addr: A,
    protocol: WireProtocol,
    seed: u64,
) -> Result<Vec<f64>> {
    let stream = TcpStream::connect(addr)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);

    let (session_id, items) = match read_message(&mut reader)? {
        Some(WireMessage::Solicit { session_id, items }) => (session_id, items),
        Some(WireMessage::Error { code, detail }) => {
            return Err(Error::Protocol(format!("analyst error {code:?}: {detail}")))
        }
        other => return Err(Error::Protocol(format!("expected solicit, got {other:?}"))),
    };
    let disclosure = Disclosure { items };

    let feedback = match protocol {
        WireProtocol::Mp => {
            let values = disclosure
                .items
                .iter()
                .map(|item| {
                    ratings.get(&item.id).copied().ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "item {} solicited but not rated; the midpoint protocol needs every \
                             solicited rating",
                            item.id
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            mp_obfuscate(&values, label, &disclosure)?
        }
        WireProtocol::Mpss => {
            let solicited: BTreeSet<ItemId> = disclosure.items.iter().map(|i| i.id).collect();
            let s0: Vec<(ItemId, f64)> = ratings
                .iter()
                .filter(|(id, _)| solicited.contains(id))
                .map(|(&id, &r)| (id, r))
                .collect();
            let mut rng = seed::rng(seed, &[seed::stream::AGENT]);
            mpss_obfuscate(&s0, label, &disclosure, &mut rng)?
        }
    };
    write_message(
        &mut writer,
        &WireMessage::Feedback {
            session_id,
            revealed: feedback.revealed,
            values: feedback.values,
        },
    )?;

    match read_message(&mut reader)? {
        Some(WireMessage::Estimate { session_id: sid, x_hat }) if sid == session_id => Ok(x_hat),
        Some(WireMessage::Error { code, detail }) => {
            Err(Error::Protocol(format!("analyst error {code:?}: {detail}")))
        }
        other => Err(Error::Protocol(format!("expected estimate, got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::ModelItem;
    use std::io::Cursor;

    fn test_model() -> AnalystModel {
        let items = vec![
            ModelItem {
                id: 1,
                bias: 0.5,
                latent: vec![1.0, 0.0],
                p_plus: 0.9,
                p_minus: 0.6,
                mean_all: 3.0,
                mean_plus: 3.3,
                mean_minus: 2.7,
            },
            ModelItem {
                id: 2,
                bias: -0.2,
                latent: vec![0.0, 1.0],
                p_plus: 0.8,
                p_minus: 0.8,
                mean_all: 2.5,
                mean_plus: 2.4,
                mean_minus: 2.6,
            },
            ModelItem {
                id: 3,
                bias: 0.1,
                latent: vec![1.0, 1.0],
                p_plus: 0.7,
                p_minus: 0.9,
                mean_all: 3.5,
                mean_plus: 3.6,
                mean_minus: 3.4,
            },
        ];
        AnalystModel { d: 2, label_name: None, items, noise_sigma_hat: 0.0 }
    }

    #[test]
    fn messages_serialize_to_the_documented_shapes() {
        let solicit = WireMessage::Solicit {
            session_id: 1,
            items: vec![DisclosedItem { id: 7, bias: 0.5, ratio: None }],
        };
        assert_eq!(
            serde_json::to_string(&solicit).unwrap(),
            r#"{"type":"solicit","session_id":1,"items":[{"id":7,"bias":0.5}]}"#
        );
        let feedback =
            WireMessage::Feedback { session_id: 1, revealed: vec![7], values: vec![2.5] };
        assert_eq!(
            serde_json::to_string(&feedback).unwrap(),
            r#"{"type":"feedback","session_id":1,"revealed":[7],"values":[2.5]}"#
        );
        let estimate = WireMessage::Estimate { session_id: 1, x_hat: vec![0.25, -1.0] };
        assert_eq!(
            serde_json::to_string(&estimate).unwrap(),
            r#"{"type":"estimate","session_id":1,"x_hat":[0.25,-1.0]}"#
        );
        let error = WireMessage::Error {
            code: WireErrorCode::ProtocolViolation,
            detail: "item 9 was not solicited".to_string(),
        };
        assert_eq!(
            serde_json::to_string(&error).unwrap(),
            r#"{"type":"error","code":"protocol_violation","detail":"item 9 was not solicited"}"#
        );
        // Infinite ratios survive the wire encoding.
        let inf = WireMessage::Solicit {
            session_id: 2,
            items: vec![DisclosedItem { id: 1, bias: 0.0, ratio: Some(f64::INFINITY) }],
        };
        let json = serde_json::to_string(&inf).unwrap();
        assert!(json.contains(r#""ratio":"inf""#));
        assert_eq!(serde_json::from_str::<WireMessage>(&json).unwrap(), inf);
    }

    #[test]
    fn line_framing_round_trips_and_detects_eof() {
        let messages = vec![
            WireMessage::Solicit { session_id: 1, items: vec![] },
            WireMessage::Estimate { session_id: 1, x_hat: vec![1.0] },
        ];
        let mut buffer = Vec::new();
        for m in &messages {
            write_message(&mut buffer, m).unwrap();
        }
        let mut reader = Cursor::new(buffer);
        assert_eq!(read_message(&mut reader).unwrap().unwrap(), messages[0]);
        assert_eq!(read_message(&mut reader).unwrap().unwrap(), messages[1]);
        assert!(read_message(&mut reader).unwrap().is_none());
        let mut bad = Cursor::new(b"not json\n".to_vec());
        assert!(read_message(&mut bad).is_err());
    }

    #[test]
    fn no_message_schema_carries_a_label_field() {
        // Exhaustive exemplars of every variant; the union of their JSON
        // keys is the whole schema surface.
        let exemplars = [
            WireMessage::Solicit {
                session_id: 1,
                items: vec![DisclosedItem { id: 1, bias: 0.1, ratio: Some(1.0) }],
            },
            WireMessage::Feedback { session_id: 1, revealed: vec![1], values: vec![0.5] },
            WireMessage::Estimate { session_id: 1, x_hat: vec![0.1] },
            WireMessage::Error { code: WireErrorCode::Parse, detail: "x".to_string() },
        ];
        let mut keys = BTreeSet::new();
        fn collect(v: &serde_json::Value, keys: &mut BTreeSet<String>) {
            match v {
                serde_json::Value::Object(map) => {
                    for (k, inner) in map {
                        keys.insert(k.clone());
                        collect(inner, keys);
                    }
                }
                serde_json::Value::Array(items) => {
                    for inner in items {
                        collect(inner, keys);
                    }
                }
                _ => {}
            }
        }
        for m in &exemplars {
            collect(&serde_json::to_value(m).unwrap(), &mut keys);
        }
        let expected: BTreeSet<String> = [
            "type", "session_id", "items", "id", "bias", "ratio", "revealed", "values", "x_hat",
            "code", "detail",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(keys, expected);
        for private in ["label", "x0", "x_0", "feature", "gender"] {
            assert!(!keys.contains(private), "schema leaks {private}");
        }
    }

    #[test]
    fn loopback_session_round_trips() {
        let model = test_model();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let config = ServeConfig { max_sessions: Some(1), ..ServeConfig::default() };
        let server = std::thread::spawn(move || analyst_serve(&listener, &test_model(), &config));

        // Noiseless ratings of a known user: x = (2, -1), x0 = +1.
        let x = [2.0, -1.0];
        let ratings: BTreeMap<ItemId, f64> = model
            .items
            .iter()
            .map(|item| {
                let clean: f64 =
                    item.latent.iter().zip(&x).map(|(v, xk)| v * xk).sum::<f64>() + item.bias;
                (item.id, clean)
            })
            .collect();
        let x_hat = user_agent_run(&ratings, Label::Plus, addr, WireProtocol::Mp, 3).unwrap();
        server.join().unwrap().unwrap();
        assert_eq!(x_hat.len(), 2);
        for (est, truth) in x_hat.iter().zip(&x) {
            assert!((est - truth).abs() < 1e-6, "estimate {est} vs {truth}");
        }
    }

    #[test]
    fn unsolicited_item_draws_a_protocol_violation() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let config = ServeConfig { max_sessions: Some(1), ..ServeConfig::default() };
        let server = std::thread::spawn(move || analyst_serve(&listener, &test_model(), &config));

        let stream = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = BufWriter::new(stream);
        let Some(WireMessage::Solicit { session_id, .. }) = read_message(&mut reader).unwrap()
        else {
            panic!("expected solicit");
        };
        write_message(
            &mut writer,
            &WireMessage::Feedback { session_id, revealed: vec![99], values: vec![1.0] },
        )
        .unwrap();
        match read_message(&mut reader).unwrap().unwrap() {
            WireMessage::Error { code, detail } => {
                assert_eq!(code, WireErrorCode::ProtocolViolation);
                assert!(detail.contains("99"));
            }
            other => panic!("expected error, got {other:?}"),
        }
        server.join().unwrap().unwrap();
    }

    #[test]
    fn malformed_line_draws_a_parse_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let config = ServeConfig { max_sessions: Some(1), ..ServeConfig::default() };
        let server = std::thread::spawn(move || analyst_serve(&listener, &test_model(), &config));

        let stream = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = BufWriter::new(stream);
        read_message(&mut reader).unwrap().unwrap();
        writer.write_all(b"{ not json\n").unwrap();
        writer.flush().unwrap();
        match read_message(&mut reader).unwrap().unwrap() {
            WireMessage::Error { code, .. } => assert_eq!(code, WireErrorCode::Parse),
            other => panic!("expected error, got {other:?}"),
        }
        server.join().unwrap().unwrap();
    }

    #[test]
    fn mpss_agent_requires_ratios() {
        let model = test_model();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        // Analyst speaks MP (no ratios) but the agent wants MPSS.
        let config = ServeConfig { max_sessions: Some(1), ..ServeConfig::default() };
        let server = std::thread::spawn(move || analyst_serve(&listener, &test_model(), &config));
        let ratings: BTreeMap<ItemId, f64> =
            model.items.iter().map(|item| (item.id, 3.0)).collect();
        let err = user_agent_run(&ratings, Label::Plus, addr, WireProtocol::Mpss, 3).unwrap_err();
        assert!(err.to_string().contains("ratio"), "unexpected error: {err}");
        // The dropped connection reads as end-of-stream on the analyst side.
        server.join().unwrap().unwrap();
    }

    #[test]
    fn budget_restricts_the_solicited_set() {
        let model = test_model();
        let config = ServeConfig { budget: Some(2), ..ServeConfig::default() };
        let ctx = build_context(&model, &config).unwrap();
        assert_eq!(ctx.solicited.len(), 2);
        assert_eq!(ctx.disclosure.items.len(), 2);
        let full = build_context(&model, &ServeConfig::default()).unwrap();
        assert_eq!(full.solicited.len(), 3);
    }
}
