use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use super::coords::{parse_point_within, CoordError};
use super::dsl::GroundingTarget;
use super::prompts::PromptSet;
use super::{complete_one, ChatEndpoint, EndpointError, RequestMeta, Role};
use crate::geometry::{Point, Resolution};
use crate::grpo::{GridPolicy, GrpoError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundingError {
    #[error("empty element description")]
    EmptyDescription,
    #[error("grounder endpoint: {0}")]
    Endpoint(#[from] EndpointError),
    #[error("grounder output: {0}")]
    Output(#[from] CoordError),
    #[error("local grounder needs input features for this screen")]
    MissingFeatures,
    #[error("local grounder: {0}")]
    Policy(String),
    #[error("no element matches `{0}`")]
    NoMatch(String),
}

impl From<GrpoError> for GroundingError {
    fn from(e: GrpoError) -> Self {
        GroundingError::Policy(e.to_string())
    }
}

/// The screen as the grounder sees it.
#[derive(Debug, Clone, Copy)]
pub struct ScreenContext<'a> {
    pub descriptor: &'a str,
    pub resolution: Resolution,
    /// Per-screen feature vector for the local policy grounder.
    pub features: Option<&'a [f64]>,
    pub step: usize,
}

/// Maps element descriptions to screen points.
pub trait Grounder: Send + Sync {
    fn locate(&self, description: &str, screen: &ScreenContext<'_>) -> Result<Point, GroundingError>;

    /// One grounding invocation for a proposal: a point per description,
    /// in order.
    fn ground(&self, target: &GroundingTarget, screen: &ScreenContext<'_>) -> Result<Vec<Point>, GroundingError> {
        target.descriptions().into_iter().map(|d| self.locate(d, screen)).collect()
    }
}

impl<G: Grounder + ?Sized> Grounder for Arc<G> {
    fn locate(&self, description: &str, screen: &ScreenContext<'_>) -> Result<Point, GroundingError> {
        (**self).locate(description, screen)
    }
    fn ground(&self, target: &GroundingTarget, screen: &ScreenContext<'_>) -> Result<Vec<Point>, GroundingError> {
        (**self).ground(target, screen)
    }
}

/// Grounding through a chat endpoint answering `(x,y)`.
pub struct RemoteGrounder {
    endpoint: Arc<dyn ChatEndpoint>,
    prompts: PromptSet,
}

impl RemoteGrounder {
    pub fn new(endpoint: Arc<dyn ChatEndpoint>, prompts: PromptSet) -> Self {
        Self { endpoint, prompts }
    }
}

impl Grounder for RemoteGrounder {
    fn locate(&self, description: &str, screen: &ScreenContext<'_>) -> Result<Point, GroundingError> {
        if description.trim().is_empty() {
            return Err(GroundingError::EmptyDescription);
        }
        let request = self.prompts.grounder_request(description, screen.descriptor, screen.resolution);
        let meta = RequestMeta { role: Role::Grounder, step: screen.step, slot: 0, attempt: 0 };
        let text = complete_one(self.endpoint.as_ref(), &request, &meta)?;
        Ok(parse_point_within(&text, screen.resolution)?)
    }
}

/// Greedy [`GridPolicy`] grounding: the centre of the argmax cell.
/// The description is not used; the screen's features carry the target.
pub struct PolicyGrounder {
    policy: GridPolicy,
}

impl PolicyGrounder {
    pub fn new(policy: GridPolicy) -> Self {
        Self { policy }
    }
}

impl Grounder for PolicyGrounder {
    fn locate(&self, description: &str, screen: &ScreenContext<'_>) -> Result<Point, GroundingError> {
        if description.trim().is_empty() {
            return Err(GroundingError::EmptyDescription);
        }
        let features = screen.features.ok_or(GroundingError::MissingFeatures)?;
        let cell = self.policy.greedy_cell(features)?;
        // cells are screen fractions, so the centre is the same before and after resizing
        Ok(self.policy.cell_center(cell, screen.resolution))
    }
}

/// Wraps a grounder and counts invocations, for routing audits.
pub struct CountingGrounder<G> {
    inner: G,
    grounds: AtomicUsize,
    locates: AtomicUsize,
}

impl<G: Grounder> CountingGrounder<G> {
    pub fn new(inner: G) -> Self {
        Self { inner, grounds: AtomicUsize::new(0), locates: AtomicUsize::new(0) }
    }

    /// Number of [`Grounder::ground`] invocations.
    pub fn invocations(&self) -> usize {
        self.grounds.load(Ordering::SeqCst)
    }

    /// Number of individual descriptions located.
    pub fn locations(&self) -> usize {
        self.locates.load(Ordering::SeqCst)
    }
}

impl<G: Grounder> Grounder for CountingGrounder<G> {
    fn locate(&self, description: &str, screen: &ScreenContext<'_>) -> Result<Point, GroundingError> {
        self.locates.fetch_add(1, Ordering::SeqCst);
        self.inner.locate(description, screen)
    }

    fn ground(&self, target: &GroundingTarget, screen: &ScreenContext<'_>) -> Result<Vec<Point>, GroundingError> {
        self.grounds.fetch_add(1, Ordering::SeqCst);
        target.descriptions().into_iter().map(|d| self.locate(d, screen)).collect()
    }
}
