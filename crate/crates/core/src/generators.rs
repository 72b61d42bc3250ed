//! Policy generators `π_gen(h, p)`.
//!
//! Every generated policy is defined at all levels: it follows the sampled model's greedy
//! policy everywhere except at the generator's level `h`, where V-type generators swap in
//! their exploratory rule. Rollouts stop at `h`, so the later levels only matter for regret
//! accounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{g_optimal_design, DesignDist};
use crate::env::{ActionRule, Dims, Policy};
use crate::posterior::{LogPosterior, ModelClass, TabularClass};
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `π_M`, `M ~ p`.
    QType,
    /// `p ∘ʰ Unif(A)`.
    VTypeUniform,
    /// `p ∘ʰ p` with an independent second draw `M′`.
    VTypeDouble,
    /// `p ∘ʰ π_des(· | x, φʰ)`.
    VTypeDesign,
}

impl GeneratorKind {
    pub fn label(&self) -> &'static str {
        match self {
            GeneratorKind::QType => "q_type",
            GeneratorKind::VTypeUniform => "v_type_uniform",
            GeneratorKind::VTypeDouble => "v_type_double",
            GeneratorKind::VTypeDesign => "v_type_design",
        }
    }
}

/// Known features `φʰ(x, a)`, row-major `[context, level, state, action, coordinate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFeatures {
    pub dims: Dims,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DesignFeatures {
    /// `φ(x, a) = e_a`; its G-optimal design is uniform over actions.
    pub fn one_hot(dims: Dims) -> Self {
        let k = dims.actions;
        let mut data = vec![0.0; dims.sa_cells() * k];
        for cell in 0..dims.sa_cells() {
            data[cell * k + cell % k] = 1.0;
        }
        DesignFeatures { dims, dim: k, data }
    }

    /// Gaussian features of dimension `dim`, deterministic in `seed`.
    pub fn random(dims: Dims, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let data = (0..dims.sa_cells() * dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Ok(DesignFeatures { dims, dim, data })
    }

    pub fn features_at(&self, context: usize, level: usize, state: usize) -> Vec<Vec<f64>> {
        (0..self.dims.actions)
            .map(|a| {
                let start = self.dims.sa_index(context, level, state, a) * self.dim;
                self.data[start..start + self.dim].to_vec()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.dims.sa_cells() * self.dim {
            return Err(Error::DimensionMismatch(format!(
                "design features have {} entries, expected {}",
                self.data.len(),
                self.dims.sa_cells() * self.dim
            )));
        }
        Ok(())
    }
}

/// Solved design per `(context, level, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub dims: Dims,
    pub designs: Vec<DesignDist>,
}

impl DesignTable {
    pub fn solve(features: &DesignFeatures) -> Result<Self> {
        features.validate()?;
        let d = features.dims;
        let mut designs = Vec::with_capacity(d.state_cells());
        for c in 0..d.contexts {
            for h in 0..d.horizon {
                for s in 0..d.states {
                    designs.push(g_optimal_design(&features.features_at(c, h, s))?);
                }
            }
        }
        Ok(DesignTable { dims: d, designs })
    }

    pub fn at(&self, context: usize, level: usize, state: usize) -> &DesignDist {
        &self.designs[self.dims.state_index(context, level, state)]
    }

    /// Largest spanned feature dimension over all states.
    pub fn dim(&self) -> usize {
        self.designs.iter().map(|d| d.dim).max().unwrap_or(0)
    }
}

/// Generator configuration: a kind plus, for the design generator, its solved designs.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub kind: GeneratorKind,
    design: Option<DesignTable>,
}

impl Generator {
    pub fn new(kind: GeneratorKind) -> Result<Self> {
        if kind == GeneratorKind::VTypeDesign {
            return Err(Error::InvalidArgument(
                "the design generator needs known features; use Generator::with_design".into(),
            ));
        }
        Ok(Generator { kind, design: None })
    }

    pub fn with_design(features: &DesignFeatures) -> Result<Self> {
        Ok(Generator {
            kind: GeneratorKind::VTypeDesign,
            design: Some(DesignTable::solve(features)?),
        })
    }

    pub fn design(&self) -> Option<&DesignTable> {
        self.design.as_ref()
    }

    /// Action rule the generator uses at its level `h` in `state`, given the draws.
    pub fn level_rule(&self, class: &TabularClass, second: Option<usize>, context: usize, level: usize, state: usize) -> ActionRule {
        match self.kind {
            GeneratorKind::QType => unreachable!("Q-type has no separate level rule"),
            GeneratorKind::VTypeUniform => ActionRule::Uniform,
            GeneratorKind::VTypeDouble => {
                let m2 = second.expect("double-sample generator draws a second model");
                ActionRule::Fixed(class.plan(m2).action(context, level, state))
            }
            GeneratorKind::VTypeDesign => {
                let table = self.design.as_ref().expect("design generator carries a table");
                ActionRule::Mixed(table.at(context, level, state).probs.clone())
            }
        }
    }

    /// `π_gen(h, p)` for a tabular class. `level` is 0-based.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        class: &TabularClass,
        level: usize,
        posterior: &LogPosterior,
        rng: &mut R,
    ) -> Result<GeneratedPolicy> {
        let dims = class.model(0).dims;
        if level >= dims.horizon {
            return Err(Error::InvalidArgument(format!(
                "generator level {level} beyond horizon {}",
                dims.horizon
            )));
        }
        if posterior.len() != class.len() {
            return Err(Error::DimensionMismatch("posterior and class sizes differ".into()));
        }
        if let Some(table) = &self.design {
            if table.dims != dims {
                return Err(Error::DimensionMismatch("design features do not match the class".into()));
            }
        }
        let model = posterior.sample_model(rng);
        let second = match self.kind {
            GeneratorKind::VTypeDouble => Some(posterior.sample_model(rng)),
            _ => None,
        };
        let mut policy = class.plan(model).policy();
        if self.kind != GeneratorKind::QType {
            policy.levels[level] = (0..dims.contexts * dims.states)
                .map(|cs| {
                    let (c, s) = (cs / dims.states, cs % dims.states);
                    self.level_rule(class, second, c, level, s)
                })
                .collect();
        }
        Ok(GeneratedPolicy {
            kind: self.kind,
            level,
            model,
            second_model: second,
            policy,
        })
    }
}

/// A generated policy with the posterior draws that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPolicy {
    pub kind: GeneratorKind,
    pub level: usize,
    pub model: usize,
    pub second_model: Option<usize>,
    pub policy: Policy,
}

/// Draws `(M, M′)` for a generic class (used by the KNR loop, where policies are closed-loop
/// planners rather than tables).
pub fn draw_models<R: Rng + ?Sized>(kind: GeneratorKind, posterior: &LogPosterior, rng: &mut R) -> (usize, Option<usize>) {
    let m = posterior.sample_model(rng);
    let second = (kind == GeneratorKind::VTypeDouble).then(|| posterior.sample_model(rng));
    (m, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_tabular, ClassSpec, TabularSpec};
    use crate::posterior::Hyperparams;
    use crate::seeded_rng;

    fn class() -> TabularClass {
        let spec = TabularSpec {
            contexts: 2,
            states: 3,
            actions: 2,
            horizon: 3,
            reward_layout: Default::default(),
            reward_noise: Default::default(),
        };
        let c = ClassSpec {
            size: 4,
            perturbation: 0.7,
            include_true_model: true,
            misspecified: false,
        };
        gen_tabular(&spec, &c, 9).unwrap().instance.tabular_class().unwrap()
    }

    fn uniform(class: &TabularClass) -> LogPosterior {
        LogPosterior::from_class(class, Hyperparams::tuned(class.len(), 10)).unwrap()
    }

    #[test]
    fn v_type_replaces_only_level_h() {
        let class = class();
        let post = uniform(&class);
        let g = Generator::new(GeneratorKind::VTypeUniform).unwrap();
        let out = g.generate(&class, 1, &post, &mut seeded_rng(3)).unwrap();
        let base = class.plan(out.model).policy();
        assert_eq!(out.policy.levels[0], base.levels[0]);
        assert_eq!(out.policy.levels[2], base.levels[2]);
        assert!(out.policy.levels[1].iter().all(|r| *r == ActionRule::Uniform));
        assert_eq!(out.second_model, None);
    }

    #[test]
    fn double_uses_second_model_at_level_h() {
        let class = class();
        let post = uniform(&class);
        let g = Generator::new(GeneratorKind::VTypeDouble).unwrap();
        for seed in 0..20 {
            let out = g.generate(&class, 2, &post, &mut seeded_rng(seed)).unwrap();
            let m2 = out.second_model.unwrap();
            assert_eq!(out.policy.levels[2], class.plan(m2).policy().levels[2]);
            assert_eq!(out.policy.levels[..2], class.plan(out.model).policy().levels[..2]);
        }
    }

    #[test]
    fn design_rule_matches_table() {
        let class = class();
        let dims = class.model(0).dims;
        let g = Generator::with_design(&DesignFeatures::one_hot(dims)).unwrap();
        assert_eq!(g.design().unwrap().dim(), dims.actions);
        let out = g.generate(&class, 0, &uniform(&class), &mut seeded_rng(1)).unwrap();
        for rule in &out.policy.levels[0] {
            let ActionRule::Mixed(p) = rule else { panic!("expected a mixed rule") };
            assert!(p.iter().all(|x| (x - 0.5).abs() < 1e-6));
        }
    }

    #[test]
    fn rejects_bad_level_and_sizes() {
        let class = class();
        let g = Generator::new(GeneratorKind::QType).unwrap();
        assert!(g.generate(&class, 3, &uniform(&class), &mut seeded_rng(0)).is_err());
        let small = LogPosterior::new(&[0.0, 0.0], Hyperparams::tuned(2, 10)).unwrap();
        assert!(g.generate(&class, 0, &small, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn draw_models_second_only_for_double() {
        let class = class();
        let post = uniform(&class);
        let mut rng = seeded_rng(4);
        assert!(draw_models(GeneratorKind::VTypeDouble, &post, &mut rng).1.is_some());
        assert!(draw_models(GeneratorKind::QType, &post, &mut rng).1.is_none());
    }
}
