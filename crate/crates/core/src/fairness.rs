//! Max-min allocations for the four multipoint fairness definitions, and a certificate
//! checker that validates any candidate allocation independently of how it was computed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{LinkId, Model, NodeId, SourceId, VcId};

/// Relative slack used for saturation and feasibility tests.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("entity {0} uses no link")]
    NoLinks(usize),
    #[error("entity {0} is not limited by any finite capacity")]
    Unbounded(usize),
    #[error("link {0} has non-positive capacity")]
    BadCapacity(usize),
    #[error("no active source")]
    NoActiveSource,
}

/// Entities with weighted usage of capacitated links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FillProblem {
    pub capacities: Vec<f64>,
    /// Per entity: (link index, load coefficient).
    pub usage: Vec<Vec<(usize, f64)>>,
}

impl FillProblem {
    pub fn add_link(&mut self, capacity: f64) -> usize {
        self.capacities.push(capacity);
        self.capacities.len() - 1
    }

    pub fn add_entity(&mut self, usage: Vec<(usize, f64)>) -> usize {
        self.usage.push(usage);
        self.usage.len() - 1
    }

    pub fn link_load(&self, rates: &[f64], link: usize) -> f64 {
        self.usage
            .iter()
            .zip(rates)
            .flat_map(|(u, &r)| u.iter().filter(move |(l, _)| *l == link).map(move |(_, c)| c * r))
            .sum()
    }

    fn coef(&self, entity: usize, link: usize) -> f64 {
        self.usage[entity]
            .iter()
            .filter(|(l, _)| *l == link)
            .map(|(_, c)| c)
            .sum()
    }
}

/// Progressive filling: all unfrozen entities rise together; entities on a link that
/// saturates freeze. Links saturating together are handled in ascending index order.
pub fn progressive_fill(p: &FillProblem) -> Result<Vec<f64>, OracleError> {
    let n = p.usage.len();
    let nl = p.capacities.len();
    for (l, &c) in p.capacities.iter().enumerate() {
        if c.is_nan() || c <= 0.0 {
            return Err(OracleError::BadCapacity(l));
        }
    }
    let mut users: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
    for (e, u) in p.usage.iter().enumerate() {
        if !u.iter().any(|&(_, c)| c > 0.0) {
            return Err(OracleError::NoLinks(e));
        }
        for &(l, c) in u {
            if c > 0.0 {
                users[l].push((e, c));
            }
        }
    }
    let mut rate = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut level: f64 = 0.0;
    while let Some(first) = frozen.iter().position(|f| !f) {
        let mut frozen_load = vec![0.0; nl];
        let mut open_coef = vec![0.0; nl];
        for (l, us) in users.iter().enumerate() {
            for &(e, c) in us {
                if frozen[e] {
                    frozen_load[l] += c * rate[e];
                } else {
                    open_coef[l] += c;
                }
            }
        }
        let mut best = f64::INFINITY;
        let mut best_link = None;
        for l in 0..nl {
            if open_coef[l] > 0.0 && p.capacities[l].is_finite() {
                let t = (p.capacities[l] - frozen_load[l]) / open_coef[l];
                if t < best {
                    best = t;
                    best_link = Some(l);
                }
            }
        }
        let Some(best_link) = best_link else {
            return Err(OracleError::Unbounded(first));
        };
        level = level.max(best.max(0.0));
        for e in 0..n {
            if !frozen[e] {
                rate[e] = level;
            }
        }
        let mut to_freeze = BTreeSet::new();
        for l in 0..nl {
            if open_coef[l] == 0.0 || !p.capacities[l].is_finite() {
                continue;
            }
            let load = frozen_load[l] + level * open_coef[l];
            if l == best_link || p.capacities[l] - load <= TOLERANCE * p.capacities[l] {
                to_freeze.extend(users[l].iter().map(|&(e, _)| e).filter(|&e| !frozen[e]));
            }
        }
        for e in to_freeze {
            frozen[e] = true;
        }
    }
    Ok(rate)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every entity has a bottleneck link, named per entity.
    Certified(Vec<usize>),
    Infeasible {
        link: usize,
        load: f64,
        direction: Vec<f64>,
    },
    NoBottleneck {
        entity: usize,
        direction: Vec<f64>,
    },
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Certified(_) => write!(f, "certified"),
            Verdict::Infeasible { link, load, .. } => write!(f, "infeasible: link {link} load {load}"),
            Verdict::NoBottleneck { entity, .. } => write!(f, "not max-min: entity {entity} can grow"),
        }
    }
}

/// Checks feasibility and the bottleneck property. A violation carries a direction that is
/// feasible for a small enough step and raises a rate without lowering any smaller rate.
pub fn verify_maxmin(p: &FillProblem, rates: &[f64]) -> Verdict {
    let nl = p.capacities.len();
    let loads: Vec<f64> = (0..nl).map(|l| p.link_load(rates, l)).collect();
    for l in 0..nl {
        let cap = p.capacities[l];
        if loads[l] > cap * (1.0 + TOLERANCE) + TOLERANCE {
            let direction = (0..rates.len())
                .map(|e| if p.coef(e, l) > 0.0 { -1.0 } else { 0.0 })
                .collect();
            return Verdict::Infeasible {
                link: l,
                load: loads[l],
                direction,
            };
        }
    }
    let saturated = |l: usize| loads[l] >= p.capacities[l] * (1.0 - TOLERANCE) - TOLERANCE;
    let scale = rates.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let mut bottlenecks = Vec::with_capacity(rates.len());
    for (e, u) in p.usage.iter().enumerate() {
        let mut links: Vec<usize> = u.iter().filter(|(_, c)| *c > 0.0).map(|(l, _)| *l).collect();
        links.sort_unstable();
        links.dedup();
        let is_bottleneck = |l: usize| {
            saturated(l)
                && (0..rates.len())
                    .filter(|&o| p.coef(o, l) > 0.0)
                    .all(|o| rates[e] >= rates[o] - TOLERANCE * scale)
        };
        if let Some(&l) = links.iter().find(|&&l| is_bottleneck(l)) {
            bottlenecks.push(l);
            continue;
        }
        let mut direction = vec![0.0; rates.len()];
        direction[e] = 1.0;
        for &l in links.iter().filter(|&&l| saturated(l)) {
            let (o, _) = (0..rates.len())
                .filter(|&o| o != e && p.coef(o, l) > 0.0)
                .map(|o| (o, rates[o]))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("a saturated non-bottleneck link has a larger user");
            direction[o] -= p.coef(e, l) / p.coef(o, l);
        }
        return Verdict::NoBottleneck { entity: e, direction };
    }
    Verdict::Certified(bottlenecks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Definition {
    SourceBased,
    VcSource,
    FlowBased,
    VcFlow,
}

impl Definition {
    pub const ALL: [Definition; 4] = [
        Definition::SourceBased,
        Definition::VcSource,
        Definition::FlowBased,
        Definition::VcFlow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Definition::SourceBased => "source",
            Definition::VcSource => "vc-source",
            Definition::FlowBased => "flow",
            Definition::VcFlow => "vc-flow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Definition::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for Definition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a VC loads a link crossed by several of its unmerged flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcLoad {
    /// Load equals the VC's aggregate rate.
    Aggregate,
    /// Load equals the VC rate times the number of its flows on the link.
    PerFlow,
}

/// Everything the oracle needs besides the topology.
#[derive(Debug, Clone)]
pub struct OracleInput<'a> {
    pub model: &'a Model,
    /// Per link, cells/s.
    pub capacities: Vec<f64>,
    /// Per source; `INFINITY` is greedy, 0 is inactive.
    pub demands: Vec<f64>,
    /// Destinations whose paths are ignored (silenced leaves).
    pub excluded: BTreeSet<(VcId, NodeId)>,
    pub vc_load: VcLoad,
}

impl<'a> OracleInput<'a> {
    pub fn new(model: &'a Model) -> Self {
        OracleInput {
            model,
            capacities: model.links().iter().map(|l| l.capacity).collect(),
            demands: vec![f64::INFINITY; model.sources().len()],
            excluded: BTreeSet::new(),
            vc_load: VcLoad::Aggregate,
        }
    }

    fn source_links(&self, s: SourceId) -> BTreeSet<LinkId> {
        let vc = self.model.source(s).vc;
        let topo = self.model.topology(vc);
        topo.destinations()
            .filter(|&d| !self.excluded.contains(&(vc, d)))
            .filter_map(|d| topo.path(s, d))
            .flatten()
            .copied()
            .collect()
    }

    fn active(&self) -> Vec<SourceId> {
        self.model
            .sources()
            .iter()
            .map(|s| s.id)
            .filter(|&s| self.demands[s.index()] > 0.0 && !self.source_links(s).is_empty())
            .collect()
    }

    /// Sources grouped into flow entities: sources that meet at any merge point share one.
    pub fn flow_groups(&self, vc: VcId, members: &[SourceId]) -> Vec<Vec<SourceId>> {
        let topo = self.model.topology(vc);
        let pos: BTreeMap<SourceId, usize> = members.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut parent: Vec<usize> = (0..members.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (&node, roles) in topo.all_roles() {
            if !roles.merge {
                continue;
            }
            let through: Vec<usize> = topo
                .merge_inputs(node)
                .into_iter()
                .filter_map(|b| topo.lineage(node, b))
                .flatten()
                .filter_map(|s| pos.get(s).copied())
                .collect();
            for w in through.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<SourceId>> = BTreeMap::new();
        for i in 0..members.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(members[i]);
        }
        groups.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub entities: Vec<(String, f64)>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub definition: Definition,
    /// Per source, indexed by `SourceId`; inactive sources get 0.
    pub rates: Vec<f64>,
    pub stages: Vec<Stage>,
}

impl Allocation {
    pub fn rate(&self, s: SourceId) -> f64 {
        self.rates[s.index()]
    }

    pub fn certified(&self) -> bool {
        self.stages.iter().all(|s| s.verdict.is_certified())
    }
}

/// An aggregate of sources to be filled as one entity.
struct Group {
    label: String,
    members: Vec<SourceId>,
}

struct Ctx<'i, 'a> {
    input: &'i OracleInput<'a>,
    links: BTreeMap<SourceId, BTreeSet<LinkId>>,
}

impl Ctx<'_, '_> {
    fn group_links(&self, g: &Group) -> BTreeSet<LinkId> {
        g.members.iter().flat_map(|s| self.links[s].iter().copied()).collect()
    }

    fn demand(&self, g: &Group) -> f64 {
        g.members.iter().map(|s| self.input.demands[s.index()]).sum()
    }

    /// Load coefficient of a group on a link.
    fn coef(&self, g: &Group, link: LinkId, per_flow: bool) -> f64 {
        if !per_flow {
            return 1.0;
        }
        let vc = self.input.model.source(g.members[0]).vc;
        let topo = self.input.model.topology(vc);
        let flows: BTreeSet<_> = g
            .members
            .iter()
            .filter(|s| self.links[s].contains(&link))
            .filter_map(|&s| topo.label(link, s))
            .collect();
        flows.len().max(1) as f64
    }

    /// Fills `groups` against `residual` physical capacity, an optional shared cap and each
    /// group's demand. Returns group rates (as aggregate throughput) and the certificate.
    fn fill(
        &self,
        groups: &[Group],
        residual: &[f64],
        shared_cap: Option<f64>,
        per_flow: bool,
    ) -> Result<(Vec<f64>, Vec<BTreeMap<LinkId, f64>>, Verdict), OracleError> {
        let mut p = FillProblem::default();
        let phys: Vec<usize> = residual.iter().map(|&c| p.add_link(c.max(f64::MIN_POSITIVE))).collect();
        let shared = shared_cap.map(|c| p.add_link(c.max(f64::MIN_POSITIVE)));
        let mut coefs = Vec::new();
        for g in groups {
            let mut usage = Vec::new();
            let mut cmap = BTreeMap::new();
            for l in self.group_links(g) {
                let c = self.coef(g, l, per_flow);
                usage.push((phys[l.index()], c));
                cmap.insert(l, c);
            }
            let kmax = cmap.values().fold(1.0f64, |a, &b| a.max(b));
            if let Some(s) = shared {
                usage.push((s, kmax));
            }
            let d = self.demand(g);
            if d.is_finite() {
                let dl = p.add_link(d);
                usage.push((dl, kmax));
            }
            p.add_entity(usage);
            coefs.push(cmap);
        }
        let rates = progressive_fill(&p)?;
        let verdict = verify_maxmin(&p, &rates);
        // Report aggregate throughput: rate times the largest coefficient.
        let agg = rates
            .iter()
            .zip(&coefs)
            .map(|(r, c)| r * c.values().fold(1.0f64, |a, &b| a.max(b)))
            .collect();
        let loads = rates
            .iter()
            .zip(coefs)
            .map(|(r, c)| c.into_iter().map(|(l, k)| (l, r * k)).collect())
            .collect();
        Ok((agg, loads, verdict))
    }
}

fn stage_entry(stages: &mut Vec<Stage>, name: String, labels: Vec<String>, rates: &[f64], verdict: Verdict) {
    stages.push(Stage {
        name,
        entities: labels.into_iter().zip(rates.iter().copied()).collect(),
        verdict,
    });
}

/// Residual capacity left for one group after subtracting every other group's load.
fn residual_excluding(caps: &[f64], loads: &[BTreeMap<LinkId, f64>], skip: usize) -> Vec<f64> {
    let mut out = caps.to_vec();
    for (i, m) in loads.iter().enumerate() {
        if i != skip {
            for (l, v) in m {
                out[l.index()] -= v;
            }
        }
    }
    out
}

/// Computes the allocation for one definition.
pub fn allocate(input: &OracleInput<'_>, def: Definition) -> Result<Allocation, OracleError> {
    let model = input.model;
    let active = input.active();
    if active.is_empty() {
        return Err(OracleError::NoActiveSource);
    }
    let ctx = Ctx {
        input,
        links: active.iter().map(|&s| (s, input.source_links(s))).collect(),
    };
    let name = |s: SourceId| model.source(s).name.clone();
    let single = |s: SourceId| Group {
        label: name(s),
        members: vec![s],
    };
    let by_vc = {
        let mut m: BTreeMap<VcId, Vec<SourceId>> = BTreeMap::new();
        for &s in &active {
            m.entry(model.source(s).vc).or_default().push(s);
        }
        m
    };
    let flow_groups = |vc: VcId, members: &[SourceId]| -> Vec<Group> {
        input
            .flow_groups(vc, members)
            .into_iter()
            .map(|ms| Group {
                label: format!(
                    "{}[{}]",
                    model.vc(vc).name,
                    ms.iter().map(|&s| name(s)).collect::<Vec<_>>().join("+")
                ),
                members: ms,
            })
            .collect()
    };

    let mut rates = vec![0.0; model.sources().len()];
    let mut stages = Vec::new();
    let caps = &input.capacities;

    // Splits each group's rate among its member sources.
    let split = |groups: &[Group],
                 group_rates: &[f64],
                 group_loads: &[BTreeMap<LinkId, f64>],
                 base: &[f64],
                 stages: &mut Vec<Stage>,
                 rates: &mut Vec<f64>|
     -> Result<(), OracleError> {
        for (gi, g) in groups.iter().enumerate() {
            if g.members.len() == 1 {
                rates[g.members[0].index()] = group_rates[gi];
                continue;
            }
            let residual = residual_excluding(base, group_loads, gi);
            let members: Vec<Group> = g.members.iter().map(|&s| single(s)).collect();
            let (r, _, verdict) = ctx.fill(&members, &residual, Some(group_rates[gi]), false)?;
            for (m, v) in g.members.iter().zip(&r) {
                rates[m.index()] = *v;
            }
            stage_entry(
                stages,
                format!("sources in {}", g.label),
                members.into_iter().map(|m| m.label).collect(),
                &r,
                verdict,
            );
        }
        Ok(())
    };

    match def {
        Definition::SourceBased => {
            let groups: Vec<Group> = active.iter().map(|&s| single(s)).collect();
            let (r, _, verdict) = ctx.fill(&groups, caps, None, false)?;
            for (g, v) in groups.iter().zip(&r) {
                rates[g.members[0].index()] = *v;
            }
            stage_entry(&mut stages, "sources".into(), groups.into_iter().map(|g| g.label).collect(), &r, verdict);
        }
        Definition::FlowBased => {
            let groups: Vec<Group> = by_vc.iter().flat_map(|(&vc, ms)| flow_groups(vc, ms)).collect();
            let (r, loads, verdict) = ctx.fill(&groups, caps, None, false)?;
            stage_entry(&mut stages, "flows".into(), groups.iter().map(|g| g.label.clone()).collect(), &r, verdict);
            split(&groups, &r, &loads, caps, &mut stages, &mut rates)?;
        }
        Definition::VcSource | Definition::VcFlow => {
            let vcs: Vec<Group> = by_vc
                .iter()
                .map(|(&vc, ms)| Group {
                    label: model.vc(vc).name.clone(),
                    members: ms.clone(),
                })
                .collect();
            let per_flow = input.vc_load == VcLoad::PerFlow;
            let (vr, vloads, verdict) = ctx.fill(&vcs, caps, None, per_flow)?;
            stage_entry(&mut stages, "vcs".into(), vcs.iter().map(|g| g.label.clone()).collect(), &vr, verdict);
            for (vi, v) in vcs.iter().enumerate() {
                let residual = residual_excluding(caps, &vloads, vi);
                if def == Definition::VcSource {
                    split(std::slice::from_ref(v), &vr[vi..=vi], &[BTreeMap::new()], &residual, &mut stages, &mut rates)?;
                    continue;
                }
                let vc = model.source(v.members[0]).vc;
                let flows = flow_groups(vc, &v.members);
                if flows.len() == 1 {
                    split(&flows, &vr[vi..=vi], &[BTreeMap::new()], &residual, &mut stages, &mut rates)?;
                    continue;
                }
                let (fr, floads, verdict) = ctx.fill(&flows, &residual, Some(vr[vi]), false)?;
                stage_entry(
                    &mut stages,
                    format!("flows in {}", v.label),
                    flows.iter().map(|g| g.label.clone()).collect(),
                    &fr,
                    verdict,
                );
                split(&flows, &fr, &floads, &residual, &mut stages, &mut rates)?;
            }
        }
    }
    Ok(Allocation {
        definition: def,
        rates,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::Builder;
    use crate::model::{validate, VcKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0))
    }

    /// a1 at N0 and a2 at N1 merge at N2; b1 attaches at N2; L = N2 -> N3.
    pub(crate) fn t1(cap: f64) -> Model {
        let mut b = Builder::new(4);
        let x1 = b.link(0, 2, 1e6);
        let x2 = b.link(1, 2, 1e6);
        let l = b.link(2, 3, cap);
        b.vc(VcKind::Mp2p, &[0, 1], &[3], &[x1, x2, l]);
        b.vc(VcKind::P2p, &[2], &[3], &[l]);
        validate(b.net).unwrap()
    }

    /// a1, a2 and b1 all attach at N0 and cross L = N0 -> N1 as three flows.
    pub(crate) fn t2(cap: f64) -> Model {
        let mut b = Builder::new(2);
        let l = b.link(0, 1, cap);
        b.vc(VcKind::Mp2p, &[0, 0], &[1], &[l]);
        b.vc(VcKind::P2p, &[0], &[1], &[l]);
        validate(b.net).unwrap()
    }

    fn rates(m: &Model, def: Definition) -> Vec<f64> {
        allocate(&OracleInput::new(m), def).unwrap().rates
    }

    #[test]
    fn fill_examples() {
        let p = FillProblem {
            capacities: vec![90.0],
            usage: vec![vec![(0, 1.0)]; 3],
        };
        assert!(close(&progressive_fill(&p).unwrap(), &[30.0, 30.0, 30.0]));
        let p = FillProblem {
            capacities: vec![10.0, 100.0],
            usage: vec![vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0)]],
        };
        assert!(close(&progressive_fill(&p).unwrap(), &[10.0, 90.0]));
        let p = FillProblem {
            capacities: vec![30.0, 30.0],
            usage: vec![vec![(0, 1.0)], vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0)]],
        };
        assert!(close(&progressive_fill(&p).unwrap(), &[15.0, 15.0, 15.0]));
        let bad = FillProblem {
            capacities: vec![1.0],
            usage: vec![vec![]],
        };
        assert_eq!(progressive_fill(&bad), Err(OracleError::NoLinks(0)));
    }

    #[test]
    fn verify_flags_infeasible_and_non_maxmin() {
        let p = FillProblem {
            capacities: vec![120.0],
            usage: vec![vec![(0, 1.0)]; 3],
        };
        assert!(verify_maxmin(&p, &[40.0, 40.0, 40.0]).is_certified());
        // Sums to exactly 120, so it is feasible; it fails on the bottleneck property instead.
        assert!(matches!(verify_maxmin(&p, &[50.0, 40.0, 30.0]), Verdict::NoBottleneck { entity: 1, .. }));
        assert!(matches!(verify_maxmin(&p, &[50.0, 40.0, 31.0]), Verdict::Infeasible { link: 0, .. }));
        match verify_maxmin(&p, &[50.0, 40.0, 9.0]) {
            Verdict::NoBottleneck { entity, direction } => {
                assert_eq!(entity, 0);
                assert_eq!(direction, vec![1.0, 0.0, 0.0]);
            }
            v => panic!("{v:?}"),
        }
        match verify_maxmin(&p, &[60.0, 40.0, 20.0]) {
            Verdict::NoBottleneck { entity, direction } => {
                assert_eq!(entity, 1);
                assert_eq!(direction, vec![-1.0, 1.0, 0.0]);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn random_fills_are_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let nl = rng.gen_range(1..=4);
            let ne = rng.gen_range(1..=6);
            let capacities: Vec<f64> = (0..nl).map(|_| rng.gen_range(1.0..100.0)).collect();
            let usage: Vec<Vec<(usize, f64)>> = (0..ne)
                .map(|_| {
                    let mut u: Vec<(usize, f64)> = (0..nl).filter(|_| rng.gen_bool(0.5)).map(|l| (l, 1.0)).collect();
                    if u.is_empty() {
                        u.push((rng.gen_range(0..nl), 1.0));
                    }
                    u
                })
                .collect();
            let p = FillProblem { capacities, usage };
            let r = progressive_fill(&p).unwrap();
            assert!(verify_maxmin(&p, &r).is_certified(), "{p:?} {r:?}");
        }
    }

    #[test]
    fn t1_table() {
        let m = t1(120.0);
        assert!(close(&rates(&m, Definition::SourceBased), &[40.0, 40.0, 40.0]));
        assert!(close(&rates(&m, Definition::VcSource), &[30.0, 30.0, 60.0]));
        assert!(close(&rates(&m, Definition::FlowBased), &[30.0, 30.0, 60.0]));
        assert!(close(&rates(&m, Definition::VcFlow), &[30.0, 30.0, 60.0]));
    }

    #[test]
    fn t2_table() {
        let m = t2(120.0);
        assert!(close(&rates(&m, Definition::SourceBased), &[40.0, 40.0, 40.0]));
        assert!(close(&rates(&m, Definition::VcSource), &[30.0, 30.0, 60.0]));
        assert!(close(&rates(&m, Definition::FlowBased), &[40.0, 40.0, 40.0]));
        assert!(close(&rates(&m, Definition::VcFlow), &[30.0, 30.0, 60.0]));
        let mut per_flow = OracleInput::new(&m);
        per_flow.vc_load = VcLoad::PerFlow;
        let a = allocate(&per_flow, Definition::VcSource).unwrap();
        assert!(close(&a.rates, &[40.0, 40.0, 40.0]), "{:?}", a.rates);
    }

    #[test]
    fn demand_caps_redistribute() {
        let m = t1(12000.0);
        let mut inp = OracleInput::new(&m);
        inp.capacities = inp.capacities.iter().map(|c| c * 0.95).collect();
        inp.demands[0] = 1000.0;
        let a = allocate(&inp, Definition::VcSource).unwrap();
        assert!(close(&a.rates, &[1000.0, 4700.0, 5700.0]), "{:?}", a.rates);
        assert!(a.certified());
    }

    #[test]
    fn p2p_only_definitions_coincide() {
        let mut b = Builder::new(4);
        let l0 = b.link(0, 1, 100.0);
        let l1 = b.link(1, 2, 30.0);
        let l2 = b.link(1, 3, 70.0);
        b.vc(VcKind::P2p, &[0], &[2], &[l0, l1]);
        b.vc(VcKind::P2p, &[0], &[3], &[l0, l2]);
        b.vc(VcKind::P2p, &[1], &[3], &[l2]);
        let m = validate(b.net).unwrap();
        let base = rates(&m, Definition::SourceBased);
        for d in Definition::ALL {
            assert_eq!(rates(&m, d), base, "{d}");
        }
        assert!(close(&base, &[30.0, 35.0, 35.0]));
    }

    #[test]
    fn p2mp_source_uses_whole_tree() {
        let mut b = Builder::new(3);
        let l1 = b.link(0, 1, 50.0);
        let l2 = b.link(0, 2, 80.0);
        b.vc(VcKind::P2mp, &[0], &[1, 2], &[l1, l2]);
        let m = validate(b.net).unwrap();
        assert_eq!(rates(&m, Definition::SourceBased), vec![50.0]);
        let mut inp = OracleInput::new(&m);
        inp.excluded.insert((VcId(0), NodeId(1)));
        assert_eq!(allocate(&inp, Definition::SourceBased).unwrap().rates, vec![80.0]);
    }

    #[test]
    fn scale_invariance_and_certification() {
        for m in [t1(120.0), t2(120.0)] {
            for d in Definition::ALL {
                let a = allocate(&OracleInput::new(&m), d).unwrap();
                assert!(a.certified(), "{d}: {:?}", a.stages);
                let mut scaled = OracleInput::new(&m);
                scaled.capacities = scaled.capacities.iter().map(|c| c * 3.0).collect();
                let b = allocate(&scaled, d).unwrap();
                let want: Vec<f64> = a.rates.iter().map(|r| r * 3.0).collect();
                assert!(close(&b.rates, &want));
            }
        }
    }
}
