//! Scenario construction: per-client, per-session index assignments for the
//! three continual federated learning settings, plus the stratified
//! train/test split.

use super::{DataError, Dataset};
use crate::numkit::RngStream;
use std::collections::BTreeSet;

const CLASS_SHUFFLE_SALT: u64 = 0x5EED_0001;
const DOMAIN_SHUFFLE_SALT: u64 = 0x5EED_0002;
const SPLIT_SHUFFLE_SALT: u64 = 0x5EED_0003;

/// The three continual federated learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Identical class distribution on every client, classes incrementing
    /// over sessions.
    ClassIncIid,
    /// Shifted class distributions across clients, classes incrementing
    /// over sessions.
    ClassIncNonIid,
    /// One data domain per session, all classes present on every client.
    DomainInc,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::ClassIncIid => "class_inc_iid",
            Scenario::ClassIncNonIid => "class_inc_noniid",
            Scenario::DomainInc => "domain_inc",
        }
    }
}

/// Immutable per-client, per-session assignment of dataset indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSchedule {
    num_clients: usize,
    num_sessions: usize,
    rounds_per_session: usize,
    scenario: Scenario,
    assignment: Vec<Vec<Vec<usize>>>,
}

impl ClientSchedule {
    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_sessions(&self) -> usize {
        self.num_sessions
    }

    pub fn rounds_per_session(&self) -> usize {
        self.rounds_per_session
    }

    pub fn total_rounds(&self) -> usize {
        self.num_sessions * self.rounds_per_session
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn indices(&self, client: usize, session: usize) -> &[usize] {
        &self.assignment[client][session]
    }

    /// Builder-style: schedules are constructed with one round per session;
    /// the experiment config decides the actual cadence.
    pub fn with_rounds_per_session(mut self, rounds_per_session: usize) -> Self {
        self.rounds_per_session = rounds_per_session;
        self
    }
}

/// Identical class sets on every client; sessions walk the class list in
/// order, and each class splits evenly and disjointly across clients.
pub fn partition_class_inc_iid(
    dataset: &Dataset,
    num_clients: usize,
    num_sessions: usize,
    classes_per_session: usize,
    rng: &RngStream,
) -> Result<ClientSchedule, DataError> {
    check_class_inc_params(dataset, num_clients, num_sessions, classes_per_session)?;
    let class_sets = (0..num_clients)
        .map(|_| {
            (0..num_sessions)
                .map(|s| (s * classes_per_session..(s + 1) * classes_per_session).collect())
                .collect()
        })
        .collect::<Vec<Vec<Vec<usize>>>>();
    assign_by_class_sets(dataset, &class_sets, rng, Scenario::ClassIncIid)
}

/// Client `k`'s session-`s` class set is the session-`s` set cyclically
/// shifted by `k·classes_per_session` modulo `C`, so client 0 follows the
/// identical-distribution schedule and each session's union covers all
/// classes once `K·cps >= C`.
pub fn partition_class_inc_noniid(
    dataset: &Dataset,
    num_clients: usize,
    num_sessions: usize,
    classes_per_session: usize,
    rng: &RngStream,
) -> Result<ClientSchedule, DataError> {
    check_class_inc_params(dataset, num_clients, num_sessions, classes_per_session)?;
    let num_classes = dataset.num_classes();
    let class_sets = (0..num_clients)
        .map(|k| {
            (0..num_sessions)
                .map(|s| {
                    let start = (s + k) * classes_per_session;
                    (0..classes_per_session)
                        .map(|j| (start + j) % num_classes)
                        .collect()
                })
                .collect()
        })
        .collect::<Vec<Vec<Vec<usize>>>>();
    assign_by_class_sets(dataset, &class_sets, rng, Scenario::ClassIncNonIid)
}

fn check_class_inc_params(
    dataset: &Dataset,
    num_clients: usize,
    num_sessions: usize,
    classes_per_session: usize,
) -> Result<(), DataError> {
    if num_clients == 0 || num_sessions == 0 || classes_per_session == 0 {
        return Err(DataError::Domain(
            "partition: clients, sessions and classes_per_session must be positive".into(),
        ));
    }
    if num_sessions * classes_per_session > dataset.num_classes() {
        return Err(DataError::Domain(format!(
            "partition: {num_sessions} sessions x {classes_per_session} classes exceed {} classes \
             (class revisits are not supported)",
            dataset.num_classes()
        )));
    }
    Ok(())
}

/// Splits every class evenly across the (client, session) slots that hold
/// it, truncating the per-class remainder so all slots stay balanced.
fn assign_by_class_sets(
    dataset: &Dataset,
    class_sets: &[Vec<Vec<usize>>],
    rng: &RngStream,
    scenario: Scenario,
) -> Result<ClientSchedule, DataError> {
    let num_clients = class_sets.len();
    let num_sessions = class_sets[0].len();
    let mut assignment = vec![vec![Vec::new(); num_sessions]; num_clients];

    for class in 0..dataset.num_classes() {
        let mut slots = Vec::new();
        for session in 0..num_sessions {
            for client in 0..num_clients {
                if class_sets[client][session].contains(&class) {
                    slots.push((client, session));
                }
            }
        }
        if slots.is_empty() {
            continue;
        }
        let mut pool = dataset.indices_of_class(class);
        let per_slot = pool.len() / slots.len();
        if per_slot == 0 {
            return Err(DataError::Domain(format!(
                "partition: class {class} has {} samples for {} slots",
                pool.len(),
                slots.len()
            )));
        }
        rng.split(CLASS_SHUFFLE_SALT + class as u64).shuffle(&mut pool);
        for (i, &(client, session)) in slots.iter().enumerate() {
            assignment[client][session].extend_from_slice(&pool[i * per_slot..(i + 1) * per_slot]);
        }
    }

    Ok(ClientSchedule {
        num_clients,
        num_sessions,
        rounds_per_session: 1,
        scenario,
        assignment,
    })
}

/// Domain-incremental schedule visiting domains in ascending index order.
pub fn partition_domain_inc(
    dataset: &Dataset,
    num_clients: usize,
    rng: &RngStream,
) -> Result<ClientSchedule, DataError> {
    let order: Vec<usize> = (0..dataset.num_domains()).collect();
    partition_domain_inc_with_order(dataset, num_clients, &order, rng)
}

/// Domain-incremental schedule with an explicit domain visiting order; one
/// session per domain, every class split evenly across clients within the
/// session's domain.
pub fn partition_domain_inc_with_order(
    dataset: &Dataset,
    num_clients: usize,
    order: &[usize],
    rng: &RngStream,
) -> Result<ClientSchedule, DataError> {
    if dataset.num_domains() < 2 {
        return Err(DataError::Domain(format!(
            "partition: domain-incremental needs >= 2 domains, got {}",
            dataset.num_domains()
        )));
    }
    if num_clients == 0 {
        return Err(DataError::Domain("partition: clients must be positive".into()));
    }
    let expected: BTreeSet<usize> = (0..dataset.num_domains()).collect();
    let got: BTreeSet<usize> = order.iter().copied().collect();
    if order.len() != dataset.num_domains() || got != expected {
        return Err(DataError::Domain(format!(
            "partition: domain order {order:?} is not a permutation of 0..{}",
            dataset.num_domains()
        )));
    }

    let num_sessions = order.len();
    let mut assignment = vec![vec![Vec::new(); num_sessions]; num_clients];
    for (session, &domain) in order.iter().enumerate() {
        for class in 0..dataset.num_classes() {
            let mut pool = dataset.indices_of_class_domain(class, domain);
            let per_client = pool.len() / num_clients;
            if per_client == 0 {
                continue; // fewer samples than clients; class dropped for this domain
            }
            rng.split(DOMAIN_SHUFFLE_SALT + (domain * dataset.num_classes() + class) as u64)
                .shuffle(&mut pool);
            for client in 0..num_clients {
                assignment[client][session]
                    .extend_from_slice(&pool[client * per_client..(client + 1) * per_client]);
            }
        }
        for (client, per_client_sessions) in assignment.iter().enumerate() {
            if per_client_sessions[session].is_empty() {
                return Err(DataError::Domain(format!(
                    "partition: domain {domain} leaves client {client} without samples"
                )));
            }
        }
    }

    Ok(ClientSchedule {
        num_clients,
        num_sessions,
        rounds_per_session: 1,
        scenario: Scenario::DomainInc,
        assignment,
    })
}

/// Deterministic stratified split by (class, domain). Every stratum
/// contributes at least one example to each side.
pub fn train_test_split(
    dataset: &Dataset,
    test_fraction: f64,
    rng: &RngStream,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Domain(format!(
            "train_test_split: fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..dataset.num_classes() {
        for domain in 0..dataset.num_domains() {
            let mut pool = dataset.indices_of_class_domain(class, domain);
            if pool.is_empty() {
                continue;
            }
            if pool.len() < 2 {
                return Err(DataError::Domain(format!(
                    "train_test_split: stratum (class {class}, domain {domain}) has fewer than 2 samples"
                )));
            }
            rng.split(SPLIT_SHUFFLE_SALT + (class * dataset.num_domains() + domain) as u64)
                .shuffle(&mut pool);
            let n_test = ((pool.len() as f64 * test_fraction).round() as usize)
                .clamp(1, pool.len() - 1);
            test_idx.extend_from_slice(&pool[..n_test]);
            train_idx.extend_from_slice(&pool[n_test..]);
        }
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train = Dataset::new(
        dataset.gather(&train_idx),
        dataset.num_classes(),
        dataset.num_domains(),
        dataset.d_feat(),
    )?;
    let test = Dataset::new(
        dataset.gather(&test_idx),
        dataset.num_classes(),
        dataset.num_domains(),
        dataset.d_feat(),
    )?;
    Ok((train, test))
}

/// Checks every schedule invariant against its source dataset: index
/// bounds, the two disjointness axes, and the per-scenario class/domain
/// structure. Returns a description of the first violation found.
pub fn verify_schedule(dataset: &Dataset, schedule: &ClientSchedule) -> Result<(), String> {
    let mut seen_global: BTreeSet<usize> = BTreeSet::new();
    for client in 0..schedule.num_clients() {
        let mut seen_client: BTreeSet<usize> = BTreeSet::new();
        for session in 0..schedule.num_sessions() {
            let mut session_set: BTreeSet<usize> = BTreeSet::new();
            for &idx in schedule.indices(client, session) {
                if idx >= dataset.len() {
                    return Err(format!("index {idx} out of bounds"));
                }
                if !session_set.insert(idx) {
                    return Err(format!(
                        "index {idx} duplicated within client {client} session {session}"
                    ));
                }
            }
            for &idx in &session_set {
                if !seen_client.insert(idx) {
                    return Err(format!(
                        "index {idx} reused across sessions of client {client}"
                    ));
                }
            }
        }
        seen_global.extend(seen_client);
    }
    // Cross-client disjointness within each session.
    for session in 0..schedule.num_sessions() {
        let mut session_union: BTreeSet<usize> = BTreeSet::new();
        for client in 0..schedule.num_clients() {
            for &idx in schedule.indices(client, session) {
                if !session_union.insert(idx) {
                    return Err(format!(
                        "index {idx} assigned to two clients in session {session}"
                    ));
                }
            }
        }
    }

    let label_set = |client: usize, session: usize| -> BTreeSet<usize> {
        schedule
            .indices(client, session)
            .iter()
            .map(|&i| dataset.example(i).label)
            .collect()
    };

    match schedule.scenario() {
        Scenario::ClassIncIid => {
            let mut all_session_labels: Vec<BTreeSet<usize>> = Vec::new();
            for session in 0..schedule.num_sessions() {
                let reference = label_set(0, session);
                if reference.is_empty() {
                    return Err(format!("session {session} has no labels"));
                }
                for client in 1..schedule.num_clients() {
                    if label_set(client, session) != reference {
                        return Err(format!(
                            "client {client} label set differs in session {session}"
                        ));
                    }
                }
                for (prev, labels) in all_session_labels.iter().enumerate() {
                    if !labels.is_disjoint(&reference) {
                        return Err(format!("sessions {prev} and {session} share labels"));
                    }
                }
                all_session_labels.push(reference);
            }
        }
        Scenario::ClassIncNonIid => {
            let cps = label_set(0, 0).len();
            for client in 0..schedule.num_clients() {
                let mut client_labels: BTreeSet<usize> = BTreeSet::new();
                for session in 0..schedule.num_sessions() {
                    let labels = label_set(client, session);
                    if labels.len() != cps {
                        return Err(format!(
                            "client {client} session {session} holds {} classes, expected {cps}",
                            labels.len()
                        ));
                    }
                    if !client_labels.is_disjoint(&labels) {
                        return Err(format!(
                            "client {client} revisits a class in session {session}"
                        ));
                    }
                    client_labels.extend(labels);
                }
            }
            if schedule.num_clients() * cps >= dataset.num_classes() {
                for session in 0..schedule.num_sessions() {
                    let mut union: BTreeSet<usize> = BTreeSet::new();
                    for client in 0..schedule.num_clients() {
                        union.extend(label_set(client, session));
                    }
                    if union.len() != dataset.num_classes() {
                        return Err(format!(
                            "session {session} union covers {} of {} classes",
                            union.len(),
                            dataset.num_classes()
                        ));
                    }
                }
            }
        }
        Scenario::DomainInc => {
            let mut session_domains = Vec::new();
            for session in 0..schedule.num_sessions() {
                let mut domain = None;
                for client in 0..schedule.num_clients() {
                    for &idx in schedule.indices(client, session) {
                        let d = dataset.example(idx).domain;
                        match domain {
                            None => domain = Some(d),
                            Some(existing) if existing != d => {
                                return Err(format!(
                                    "session {session} mixes domains {existing} and {d}"
                                ));
                            }
                            _ => {}
                        }
                    }
                }
                let d = domain.ok_or_else(|| format!("session {session} is empty"))?;
                if session_domains.contains(&d) {
                    return Err(format!("domain {d} served twice"));
                }
                session_domains.push(d);

                // Full label set per client whenever the stratum supports it.
                let full: BTreeSet<usize> = (0..dataset.num_classes())
                    .filter(|&c| {
                        dataset.indices_of_class_domain(c, d).len() >= schedule.num_clients()
                    })
                    .collect();
                for client in 0..schedule.num_clients() {
                    let labels = label_set(client, session);
                    if !full.is_subset(&labels) {
                        return Err(format!(
                            "client {client} session {session} misses classes from domain {d}"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;

    fn synthetic_dataset(
        num_classes: usize,
        num_domains: usize,
        per_class_domain: usize,
    ) -> Dataset {
        let mut examples = Vec::new();
        for d in 0..num_domains {
            for c in 0..num_classes {
                for i in 0..per_class_domain {
                    examples.push(Example {
                        features: vec![c as f64, i as f64],
                        label: c,
                        domain: d,
                    });
                }
            }
        }
        Dataset::new(examples, num_classes, num_domains, 2).unwrap()
    }

    #[test]
    fn iid_sessions_walk_the_class_list() {
        let ds = synthetic_dataset(10, 1, 20);
        let rng = RngStream::from_seed(1);
        let schedule = partition_class_inc_iid(&ds, 4, 5, 2, &rng).unwrap();
        for session in 0..5 {
            for client in 0..4 {
                let labels: BTreeSet<usize> = schedule
                    .indices(client, session)
                    .iter()
                    .map(|&i| ds.example(i).label)
                    .collect();
                let expected: BTreeSet<usize> = [2 * session, 2 * session + 1].into();
                assert_eq!(labels, expected);
            }
        }
        verify_schedule(&ds, &schedule).unwrap();
    }

    #[test]
    fn iid_mnist_scale_gives_300_per_class_per_client() {
        let ds = synthetic_dataset(10, 1, 6000);
        let rng = RngStream::from_seed(2);
        let schedule = partition_class_inc_iid(&ds, 20, 5, 2, &rng).unwrap();
        for client in 0..20 {
            for session in 0..5 {
                let indices = schedule.indices(client, session);
                assert_eq!(indices.len(), 600);
                for class in [2 * session, 2 * session + 1] {
                    let count = indices
                        .iter()
                        .filter(|&&i| ds.example(i).label == class)
                        .count();
                    assert_eq!(count, 300);
                }
            }
        }
    }

    #[test]
    fn single_client_holds_every_retained_sample() {
        let ds = synthetic_dataset(6, 1, 10);
        let rng = RngStream::from_seed(3);
        let schedule = partition_class_inc_iid(&ds, 1, 3, 2, &rng).unwrap();
        let total: usize = (0..3).map(|s| schedule.indices(0, s).len()).sum();
        assert_eq!(total, 60);
        verify_schedule(&ds, &schedule).unwrap();
    }

    #[test]
    fn noniid_session_zero_matches_cyclic_shift() {
        let ds = synthetic_dataset(10, 1, 50);
        let rng = RngStream::from_seed(4);
        let schedule = partition_class_inc_noniid(&ds, 5, 5, 2, &rng).unwrap();
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for client in 0..5 {
            let labels: BTreeSet<usize> = schedule
                .indices(client, 0)
                .iter()
                .map(|&i| ds.example(i).label)
                .collect();
            let expected: BTreeSet<usize> = [2 * client, 2 * client + 1].into();
            assert_eq!(labels, expected);
            union.extend(labels);
        }
        assert_eq!(union.len(), 10);
        verify_schedule(&ds, &schedule).unwrap();
    }

    #[test]
    fn noniid_client_zero_follows_the_iid_sequence() {
        let ds = synthetic_dataset(10, 1, 40);
        let rng = RngStream::from_seed(5);
        let noniid = partition_class_inc_noniid(&ds, 5, 5, 2, &rng).unwrap();
        for session in 0..5 {
            let labels: BTreeSet<usize> = noniid
                .indices(0, session)
                .iter()
                .map(|&i| ds.example(i).label)
                .collect();
            let expected: BTreeSet<usize> = [2 * session, 2 * session + 1].into();
            assert_eq!(labels, expected);
        }
    }

    #[test]
    fn class_revisits_are_rejected() {
        let ds = synthetic_dataset(4, 1, 40);
        let rng = RngStream::from_seed(6);
        // 3 sessions x 2 classes > 4 classes would force revisits.
        assert!(partition_class_inc_noniid(&ds, 2, 3, 2, &rng).is_err());
        assert!(partition_class_inc_iid(&ds, 2, 3, 2, &rng).is_err());
    }

    #[test]
    fn domain_inc_serves_domains_in_order() {
        let ds = synthetic_dataset(3, 4, 12);
        let rng = RngStream::from_seed(7);
        let schedule = partition_domain_inc(&ds, 3, &rng).unwrap();
        assert_eq!(schedule.num_sessions(), 4);
        for session in 0..4 {
            for client in 0..3 {
                let domains: BTreeSet<usize> = schedule
                    .indices(client, session)
                    .iter()
                    .map(|&i| ds.example(i).domain)
                    .collect();
                assert_eq!(domains, BTreeSet::from([session]));
                let labels: BTreeSet<usize> = schedule
                    .indices(client, session)
                    .iter()
                    .map(|&i| ds.example(i).label)
                    .collect();
                assert_eq!(labels.len(), 3);
            }
        }
        verify_schedule(&ds, &schedule).unwrap();
    }

    #[test]
    fn domain_inc_union_covers_everything_when_divisible() {
        let ds = synthetic_dataset(2, 3, 8);
        let rng = RngStream::from_seed(8);
        let schedule = partition_domain_inc(&ds, 4, &rng).unwrap();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for client in 0..4 {
            for session in 0..3 {
                for &idx in schedule.indices(client, session) {
                    assert!(seen.insert(idx), "duplicate index {idx}");
                }
            }
        }
        assert_eq!(seen.len(), ds.len());
    }

    #[test]
    fn domain_inc_requires_multiple_domains() {
        let ds = synthetic_dataset(3, 1, 10);
        let rng = RngStream::from_seed(9);
        assert!(partition_domain_inc(&ds, 2, &rng).is_err());
    }

    #[test]
    fn partitions_are_deterministic() {
        let ds = synthetic_dataset(8, 1, 30);
        let a = partition_class_inc_iid(&ds, 3, 4, 2, &RngStream::from_seed(10)).unwrap();
        let b = partition_class_inc_iid(&ds, 3, 4, 2, &RngStream::from_seed(10)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = synthetic_dataset(5, 1, 100);
        let rng = RngStream::from_seed(11);
        let (train, test) = train_test_split(&ds, 0.2, &rng).unwrap();
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 100);
        for class in 0..5 {
            assert_eq!(test.indices_of_class(class).len(), 20);
            assert_eq!(train.indices_of_class(class).len(), 80);
        }
        let (train2, test2) = train_test_split(&ds, 0.2, &RngStream::from_seed(11)).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_union_is_everything() {
        let ds = synthetic_dataset(3, 2, 10);
        let rng = RngStream::from_seed(12);
        let (train, test) = train_test_split(&ds, 0.3, &rng).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        // Feature vectors identify examples uniquely here.
        let mut all: Vec<(usize, usize, String)> = train
            .examples()
            .iter()
            .chain(test.examples())
            .map(|e| (e.label, e.domain, format!("{:?}", e.features)))
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), ds.len());
    }

    #[test]
    fn tiny_strata_are_rejected() {
        let ds = synthetic_dataset(2, 1, 1);
        let rng = RngStream::from_seed(13);
        assert!(train_test_split(&ds, 0.5, &rng).is_err());
    }
}
