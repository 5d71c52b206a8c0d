//! One handle bundling the provider, templates, clock and attempt budget.

use std::sync::Arc;

use crate::genai::{Provider, DEFAULT_BUDGET};
use crate::model::{SeedIdea, StoryProject};
use crate::pipeline::{self, Generated, PipelineError};
use crate::prompt::PromptEngine;
use crate::revision::{self, Applied, Clock, ComponentRef, EditContext, RevisionError, SystemClock};

#[derive(Clone)]
pub struct Studio {
    provider: Arc<dyn Provider>,
    prompts: PromptEngine,
    clock: Arc<dyn Clock>,
    budget: u32,
}

impl Studio {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Self {
            provider,
            prompts: PromptEngine::default(),
            clock: Arc::new(SystemClock),
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptEngine) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }

    pub fn provider(&self) -> &dyn Provider {
        self.provider.as_ref()
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn context(&self) -> EditContext<'_> {
        EditContext {
            provider: self.provider.as_ref(),
            prompts: &self.prompts,
            clock: self.clock.as_ref(),
            budget: self.budget,
        }
    }

    pub fn suggest_ideas(&self) -> Result<Vec<String>, PipelineError> {
        pipeline::suggest_ideas(&self.context())
    }

    pub fn create_project(&self, seed: SeedIdea) -> Result<Generated, PipelineError> {
        pipeline::create_project(seed, &self.context())
    }

    pub fn revise(
        &self,
        project: &StoryProject,
        target: &ComponentRef,
        instruction: &str,
    ) -> Result<Applied, RevisionError> {
        revision::revise(project, target, instruction, &self.context())
    }

    pub fn regenerate_scene(&self, project: &StoryProject, index: u8) -> Result<Applied, RevisionError> {
        revision::regenerate_scene(project, index, &self.context())
    }

    pub fn regenerate_stale(&self, project: &StoryProject) -> Result<Option<Applied>, RevisionError> {
        revision::regenerate_stale(project, &self.context())
    }

    pub fn undo(&self, project: &StoryProject) -> Result<Applied, RevisionError> {
        revision::undo(project, &self.prompts, self.clock.as_ref())
    }
}
