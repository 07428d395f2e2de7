//! The negotiation as explicit messages between the facility controller and
//! the energy users.
//!
//! The controller only ever learns the surpluses and the scalar operator
//! values the users send back; each user keeps its sensitivity and price
//! cap to itself. Messages are processed in ascending user order every
//! round, so a run is bit-deterministic and its prices coincide exactly with
//! the centralized solver's.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::{EnergyUser, PriceVector};
use crate::scalar::Scalar;
use crate::sim::{MarketOutcome, Scenario};
use crate::solver::{allocation_at, iterate, OperatorSource, SolveTrace, SolverParams};
use crate::vi::FeasibleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    BudgetAnnounce,
    SurplusSubmit,
    PriceProbe,
    LocalOperatorReply,
    InnerProductReply,
    ProjectedPrice,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Sfc,
    Eu(usize),
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Sfc => f.write_str("sfc"),
            Agent::Eu(n) => write!(f, "eu{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload<T> {
    Empty,
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Copy> Payload<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Payload::Empty => Vec::new(),
            Payload::Scalar(x) => vec![*x],
            Payload::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage<T> {
    pub round: usize,
    pub kind: MessageKind,
    pub sender: Agent,
    pub payload: Payload<T>,
}

/// A message from a user that could reveal its private parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyViolation {
    pub index: usize,
    pub sender: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MessageLog<T> {
    pub messages: Vec<ProtocolMessage<T>>,
}

impl<T: Scalar> MessageLog<T> {
    fn push(&mut self, round: usize, kind: MessageKind, sender: Agent, payload: Payload<T>) {
        self.messages.push(ProtocolMessage {
            round,
            kind,
            sender,
            payload,
        });
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }

    /// Checks every user message: only surplus, operator and inner-product
    /// replies are allowed, each a single scalar, and none may equal the
    /// sender's sensitivity or price cap.
    pub fn audit_privacy(&self, eus: &[EnergyUser<T>]) -> Vec<PrivacyViolation> {
        let mut found = Vec::new();
        for (index, msg) in self.messages.iter().enumerate() {
            let Agent::Eu(n) = msg.sender else { continue };
            let mut flag = |reason: String| {
                found.push(PrivacyViolation {
                    index,
                    sender: n,
                    reason,
                })
            };
            if !matches!(
                msg.kind,
                MessageKind::SurplusSubmit | MessageKind::LocalOperatorReply | MessageKind::InnerProductReply
            ) {
                flag(format!("users may not send {:?}", msg.kind));
            }
            if !matches!(msg.payload, Payload::Scalar(_)) {
                flag("user payloads must be a single scalar".into());
            }
            let Some(eu) = eus.get(n) else {
                flag("unknown sender".into());
                continue;
            };
            for x in msg.payload.values() {
                if x == eu.sensitivity() {
                    flag(format!("payload {x} equals the sensitivity"));
                }
                if x == eu.price_cap() {
                    flag(format!("payload {x} equals the price cap"));
                }
            }
        }
        found
    }
}

impl<T: Scalar + Serialize> MessageLog<T> {
    /// One JSON object per line: `{round, kind, sender, payload}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for msg in &self.messages {
            out.push_str(&serde_json::to_string(msg).expect("plain data serializes"));
            out.push('\n');
        }
        out
    }
}

/// An energy user as an agent: it answers queries about its own price and
/// never hands out its parameters.
struct EuAgent<T> {
    eu: EnergyUser<T>,
}

impl<T: Scalar> EuAgent<T> {
    fn surplus(&self) -> T {
        self.eu.surplus()
    }

    /// `Z_n` at the offered price.
    fn operator_value(&self, price: T) -> T {
        self.eu.operator_component(price)
    }
}

/// The controller's side of the exchange, driving the solver iteration.
struct Controller<'a, T> {
    agents: &'a [EuAgent<T>],
    log: &'a mut MessageLog<T>,
}

impl<T: Scalar> Controller<'_, T> {
    fn collect(&mut self, round: usize, p: &[T], d: Option<&[T]>) -> Vec<T> {
        self.log.push(
            round,
            MessageKind::PriceProbe,
            Agent::Sfc,
            Payload::Vector(p.to_vec()),
        );
        let mut values = Vec::with_capacity(self.agents.len());
        for (n, agent) in self.agents.iter().enumerate() {
            let z = agent.operator_value(p[n]);
            self.log.push(
                round,
                MessageKind::LocalOperatorReply,
                Agent::Eu(n),
                Payload::Scalar(z),
            );
            if let Some(d) = d {
                self.log.push(
                    round,
                    MessageKind::InnerProductReply,
                    Agent::Eu(n),
                    Payload::Scalar(z * d[n]),
                );
            }
            values.push(z);
        }
        values
    }
}

impl<T: Scalar> OperatorSource<T> for Controller<'_, T> {
    fn operator(&mut self, round: usize, p: &[T]) -> Vec<T> {
        self.collect(round, p, None)
    }

    fn probe(&mut self, round: usize, z: &[T], d: &[T]) -> Vec<T> {
        self.collect(round, z, Some(d))
    }

    fn publish(&mut self, round: usize, p: &[T]) {
        self.log.push(
            round,
            MessageKind::ProjectedPrice,
            Agent::Sfc,
            Payload::Vector(p.to_vec()),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun<T> {
    /// Every user counted as participating; see
    /// [`apply_participation`](crate::sim::apply_participation).
    pub outcome: MarketOutcome<T>,
    pub log: MessageLog<T>,
    pub trace: SolveTrace<T>,
    pub prices: PriceVector<T>,
}

/// Runs the negotiation for `scenario`.
///
/// The controller knows the budget and the admissible price range (market
/// rules), learns the surpluses from the users, and is configured with the
/// projection step. Non-convergence is reported through
/// `outcome.converged`; the log is kept either way.
pub fn run_protocol<T: Scalar>(scenario: &Scenario<T>, params: &SolverParams<T>) -> Result<ProtocolRun<T>> {
    let prob = scenario.problem()?;
    params.validate()?;
    let mu = params.step(&prob);
    let agents: Vec<EuAgent<T>> = scenario.eus.iter().map(|&eu| EuAgent { eu }).collect();
    let mut log = MessageLog::default();

    let budget = scenario.config.budget();
    log.push(
        0,
        MessageKind::BudgetAnnounce,
        Agent::Sfc,
        Payload::Scalar(budget),
    );
    let mut surplus = Vec::with_capacity(agents.len());
    for (n, agent) in agents.iter().enumerate() {
        let e = agent.surplus();
        log.push(0, MessageKind::SurplusSubmit, Agent::Eu(n), Payload::Scalar(e));
        surplus.push(e);
    }
    let set = FeasibleSet::new(surplus, prob.lower().to_vec(), prob.upper().to_vec(), budget)?;

    let mut controller = Controller {
        agents: &agents,
        log: &mut log,
    };
    let (prices, trace) = iterate(&set, mu, params, None, &mut controller)?;
    let last_round = trace.iterations;
    log.push(
        last_round,
        MessageKind::Terminate,
        Agent::Sfc,
        Payload::Vector(prices.to_vec()),
    );

    // The harness, not the controller, evaluates benefits.
    let allocation = allocation_at(&prob, prices.clone(), params.tol)?;
    let outcome = MarketOutcome::new(
        scenario,
        &prices,
        vec![true; agents.len()],
        allocation.tau,
        trace.iterations,
        trace.converged,
        params.tol,
    )?;
    Ok(ProtocolRun {
        outcome,
        log,
        trace,
        prices,
    })
}
