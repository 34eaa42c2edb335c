//! Adaptive stochastic coverage toolkit: instances with independent item
//! states, a greedy unit-price policy, an exact adaptive optimum by dynamic
//! programming over subrealizations, and a revenue-accounting verifier that
//! certifies the greedy approximation guarantee on enumerable instances.

pub mod accounting;
pub mod error;
pub mod exec;
pub mod greedy;
pub mod harness;
pub mod instance;
pub mod optimal;
pub mod policy;
pub mod utility;

pub use accounting::{
    build_markers, delta_plus, hybrid_policy, hybrid_trace, kappa, lambda_revenues, leadsto,
    mu_revenues, verify_fact_mediant, verify_sum_bound, Check, FactAudit, HybridPolicy,
    HybridTrace, Lemma, MarkerSequence, SumBoundReport, VerificationReport, Verifier,
};
pub use error::{Error, Result, Violation, ViolationKind};
pub use exec::ExecMode;
pub use greedy::{greedy_select, unit_price, GreedyPolicy, Selector, UnitPrice};
pub use harness::{
    corpus, gen_instance, reproduce_charging_counterexample, reproduce_worked_example,
    run_experiment, verify_instance, worked_example_instance, worked_example_policy,
    ChargingCounterexampleReport, ExperimentConfig, ExperimentReport, ExperimentRow,
    GeneratorConfig, GeneratorKind, VerifySummary, WorkedExampleReport,
};
pub use optimal::{optimal_value, Lattice, OptimalPolicy, ValueTable};
pub use policy::{
    execute, expected_cost_exact, expected_cost_mc, materialize_tree, ExecutionTrace,
    ExplicitPolicy, NodeExport, NodeKind, Policy, PolicyTree, RandomPolicy, TraceStep, TreeExport,
    TreeNode,
};
pub use instance::{trial_rng, Budget, Instance, ItemId, Realization, StateId, Subrealization};
pub use utility::{
    compute_eta, goal_value, validate_coverability, validate_polymatroid, validate_sufficiency,
    AdditiveModel, CoverabilityMethod, CoverabilityReport, CoverageModel, GoalGap, TableEntry,
    TableModel, UtilityModel,
};
