//! Message flow between the key distribution centre, smart meters, the
//! aggregator and the utility, run as a deterministic slot-by-slot loop.

use std::collections::BTreeSet;

use amiguard_crypto::{
    batch_verify, canonical_payload, find_invalid, keygen, verify_single, Ciphertext, PaillierPrivateKey,
    PaillierPublicKey, PairingSuite, ReadingCodec, SigKeypair, Signed,
};
use chrono::NaiveDate;
use log::{debug, warn};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cat::{aggregate_error_cdf, efficiency, CatConfig};
use crate::data::PresenceLabel;
use crate::defense::{decide_masked, defense_decide, DefenseModel, MeterState, MeterTimeline, SlotPlan, TranscriptLine};
use crate::error::{CoreError, Result};

/// Accepted timestamp skew, in slots, on either side of the receiver's clock.
pub const FRESHNESS_SLOTS: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityConfig {
    /// Paillier modulus size.
    pub paillier_bits: usize,
    pub seed: u64,
    pub slot_minutes: u32,
}

impl SecurityConfig {
    pub fn slot_ms(&self) -> u64 {
        self.slot_minutes as u64 * 60_000
    }
}

/// Public parameters published at setup.
#[derive(Clone, Debug)]
pub struct SystemParams<S: PairingSuite> {
    pub suite: S,
    pub paillier: PaillierPublicKey,
    pub codec: ReadingCodec,
    pub slot_ms: u64,
    pub freshness_ms: u64,
}

impl<S: PairingSuite> SystemParams<S> {
    fn is_fresh(&self, ts: u64, now: u64) -> bool {
        ts.abs_diff(now) <= self.freshness_ms
    }
}

/// A signed, encrypted reading: `C || TS || sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadingMsg<S: PairingSuite> {
    pub meter: usize,
    pub ciphertext: Ciphertext,
    pub timestamp_ms: u64,
    pub sigma: S::Sig,
}

/// The aggregator's signed slot total: `C_gw || TS || sigma_gw`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggMsg<S: PairingSuite> {
    pub ciphertext: Ciphertext,
    pub timestamp_ms: u64,
    pub sigma: S::Sig,
}

pub struct SmState<S: PairingSuite> {
    pub id: usize,
    keys: SigKeypair<S>,
    pub meter: MeterState,
    seed: u64,
    last_ts: Option<u64>,
    rng: ChaCha20Rng,
}

impl<S: PairingSuite> SmState<S> {
    pub fn public(&self) -> &S::Pub {
        self.keys.public()
    }

    /// What the meter would do this slot before consulting the defense.
    pub fn plan(&self, reading: f64, presence: PresenceLabel, cat: &CatConfig, defense_on: bool) -> SlotPlan {
        self.meter.plan(reading, presence, cat.threshold_percent, defense_on)
    }

    /// Applies the slot's decision; a transmission is a fresh encryption of
    /// the current reading, signed over `C || TS`.
    pub fn commit(&mut self, params: &SystemParams<S>, reading: f64, transmit: bool, now_ms: u64) -> Result<Option<ReadingMsg<S>>> {
        if self.last_ts.is_some_and(|t| now_ms <= t) {
            return Err(CoreError::State(format!("meter {}: clock moved back to {now_ms}", self.id)));
        }
        self.last_ts = Some(now_ms);
        let msg = if transmit {
            let units = params.codec.encode(reading)?;
            let c = params.paillier.encrypt(&BigUint::from(units), &mut self.rng)?;
            let sigma = self.keys.sign(&params.suite, &canonical_payload(&c, now_ms));
            Some(ReadingMsg { meter: self.id, ciphertext: c, timestamp_ms: now_ms, sigma })
        } else {
            None
        };
        self.meter.commit(reading, transmit);
        Ok(msg)
    }
}

/// Single-meter report: plan, consult the defense if needed, commit.
pub fn sm_report<S: PairingSuite>(
    sm: &mut SmState<S>,
    params: &SystemParams<S>,
    reading: f64,
    presence: PresenceLabel,
    cat: &CatConfig,
    defense: Option<&DefenseModel>,
    now_ms: u64,
) -> Result<Option<ReadingMsg<S>>> {
    let transmit = match sm.plan(reading, presence, cat, defense.is_some()) {
        SlotPlan::Cat => true,
        SlotPlan::Silent => false,
        SlotPlan::AskDefense => match defense {
            Some(model) => defense_decide(&mut sm.meter.defense, model)? == 1,
            None => false,
        },
    };
    sm.commit(params, reading, transmit, now_ms)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub accepted: usize,
    pub stale: usize,
    pub replayed: usize,
    pub bad_signature: usize,
    pub malformed: usize,
    pub unknown_meter: usize,
    pub batch_failures: usize,
    /// Meters with at least one dropped message.
    pub flagged: BTreeSet<usize>,
}

/// Holds no Paillier private key: it can combine ciphertexts but never open one.
pub struct AggregatorState<S: PairingSuite> {
    keys: SigKeypair<S>,
    directory: Vec<S::Pub>,
    store: Vec<Option<Ciphertext>>,
    last_ts: Vec<Option<u64>>,
    pub counters: Counters,
}

impl<S: PairingSuite> AggregatorState<S> {
    pub fn public(&self) -> &S::Pub {
        self.keys.public()
    }

    pub fn enrolled(&self) -> usize {
        self.directory.len()
    }

    pub fn stored(&self, meter: usize) -> Option<&Ciphertext> {
        self.store.get(meter).and_then(Option::as_ref)
    }

    fn drop_msg(&mut self, meter: usize, why: fn(&mut Counters) -> &mut usize) {
        *why(&mut self.counters) += 1;
        if meter < self.directory.len() {
            self.counters.flagged.insert(meter);
        }
    }
}

/// Checks freshness and signatures, refreshes the store and emits the
/// signed product of every enrolled meter's latest ciphertext.
pub fn aggregator_collect<S: PairingSuite>(
    agg: &mut AggregatorState<S>,
    params: &SystemParams<S>,
    msgs: &[ReadingMsg<S>],
    now_ms: u64,
) -> Result<AggMsg<S>> {
    let mut seen = BTreeSet::new();
    let mut candidates: Vec<(&ReadingMsg<S>, Vec<u8>)> = Vec::with_capacity(msgs.len());
    for m in msgs {
        if m.meter >= agg.directory.len() {
            agg.drop_msg(m.meter, |c| &mut c.unknown_meter);
        } else if !params.is_fresh(m.timestamp_ms, now_ms) {
            agg.drop_msg(m.meter, |c| &mut c.stale);
        } else if agg.last_ts[m.meter].is_some_and(|t| m.timestamp_ms <= t) {
            agg.drop_msg(m.meter, |c| &mut c.replayed);
        } else if !params.paillier.is_valid(&m.ciphertext) {
            agg.drop_msg(m.meter, |c| &mut c.malformed);
        } else {
            candidates.push((m, canonical_payload(&m.ciphertext, m.timestamp_ms)));
        }
    }
    let items: Vec<Signed<'_, S>> = candidates
        .iter()
        .map(|(m, payload)| Signed { sigma: &m.sigma, public: &agg.directory[m.meter], payload })
        .collect();
    let invalid: BTreeSet<usize> = if items.is_empty() || batch_verify(&params.suite, &items)? {
        BTreeSet::new()
    } else {
        agg.counters.batch_failures += 1;
        find_invalid(&params.suite, &items).into_iter().collect()
    };
    drop(items);
    for (i, (m, _)) in candidates.iter().enumerate() {
        if invalid.contains(&i) {
            warn!("dropping message from meter {} with an invalid signature", m.meter);
            agg.drop_msg(m.meter, |c| &mut c.bad_signature);
            continue;
        }
        // only after verification, so a forgery cannot shadow the genuine message
        if !seen.insert(m.meter) {
            agg.drop_msg(m.meter, |c| &mut c.replayed);
            continue;
        }
        agg.store[m.meter] = Some(m.ciphertext.clone());
        agg.last_ts[m.meter] = Some(m.timestamp_ms);
        agg.counters.accepted += 1;
    }
    if let Some(missing) = agg.store.iter().position(Option::is_none) {
        return Err(CoreError::State(format!("no reading stored for meter {missing}")));
    }
    let total = params.paillier.sum(agg.store.iter().flatten());
    let sigma = agg.keys.sign(&params.suite, &canonical_payload(&total, now_ms));
    Ok(AggMsg { ciphertext: total, timestamp_ms: now_ms, sigma })
}

pub struct EuState<S: PairingSuite> {
    key: PaillierPrivateKey,
    aggregator: S::Pub,
    last_ts: Option<u64>,
}

/// A recovered slot total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recovered {
    pub units: u64,
    pub kwh: f64,
}

/// Verifies and decrypts the aggregator's total.
pub fn eu_recover<S: PairingSuite>(
    eu: &mut EuState<S>,
    params: &SystemParams<S>,
    msg: &AggMsg<S>,
    now_ms: u64,
) -> Result<Recovered> {
    if !params.is_fresh(msg.timestamp_ms, now_ms) {
        return Err(CoreError::Rejected(format!("stale aggregate timestamp {}", msg.timestamp_ms)));
    }
    if eu.last_ts.is_some_and(|t| msg.timestamp_ms <= t) {
        return Err(CoreError::Rejected(format!("replayed aggregate timestamp {}", msg.timestamp_ms)));
    }
    let payload = canonical_payload(&msg.ciphertext, msg.timestamp_ms);
    if !verify_single(&params.suite, &msg.sigma, &eu.aggregator, &payload) {
        return Err(CoreError::Rejected("aggregate signature does not verify".into()));
    }
    let m = eu.key.decrypt(&params.paillier, &msg.ciphertext)?;
    let units = ReadingCodec::units_of(&m)?;
    eu.last_ts = Some(msg.timestamp_ms);
    Ok(Recovered { units, kwh: ReadingCodec::decode(units) })
}

/// Everything the key distribution centre hands out.
pub struct Setup<S: PairingSuite> {
    pub params: SystemParams<S>,
    pub meters: Vec<SmState<S>>,
    pub aggregator: AggregatorState<S>,
    pub eu: EuState<S>,
}

/// Generates all key material from `config.seed`; every meter's public key is
/// registered at the aggregator before any slot runs.
pub fn kdc_setup<S: PairingSuite>(
    suite: S,
    meter_count: usize,
    config: &SecurityConfig,
    defense_window: usize,
) -> Result<Setup<S>> {
    if meter_count == 0 {
        return Err(CoreError::Config("at least one meter is required".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (paillier, key) = keygen(config.paillier_bits, &mut rng)?;
    let codec = ReadingCodec::new(paillier.n(), meter_count)?;
    let slot_ms = config.slot_ms();
    let params = SystemParams { suite, paillier, codec, slot_ms, freshness_ms: FRESHNESS_SLOTS * slot_ms };
    let meters: Vec<SmState<S>> = (0..meter_count)
        .map(|id| SmState {
            id,
            keys: SigKeypair::generate(&params.suite, &mut rng),
            meter: MeterState::new(defense_window, config.seed.wrapping_add(id as u64), &[]),
            seed: config.seed.wrapping_add(id as u64),
            last_ts: None,
            rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x5eed_0000_0000 ^ id as u64),
        })
        .collect();
    let agg_keys = SigKeypair::generate(&params.suite, &mut rng);
    let eu = EuState { key, aggregator: agg_keys.public().clone(), last_ts: None };
    let aggregator = AggregatorState {
        keys: agg_keys,
        directory: meters.iter().map(|m| m.public().clone()).collect(),
        store: vec![None; meter_count],
        last_ts: vec![None; meter_count],
        counters: Counters::default(),
    };
    Ok(Setup { params, meters, aggregator, eu })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub timestamp_ms: u64,
    pub transmitted: usize,
    /// Plaintext shadow: sum of the encoded readings the utility should hold.
    pub expected_units: u64,
    pub recovered_units: u64,
    /// Sum of the meters' actual readings.
    pub actual_kwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub meters: usize,
    pub slots: usize,
    pub defense: bool,
    pub transmissions: usize,
    pub spoofed: usize,
    /// Transmissions plain CAT would have made on the same readings.
    pub cat_transmissions: usize,
    pub efficiency: f64,
    pub cat_efficiency: f64,
    /// Every slot's recovered total equals the plaintext shadow.
    pub exact: bool,
    pub mismatched_slots: usize,
    pub error_p95: Option<f64>,
    pub error_max: Option<f64>,
    pub counters: Counters,
    pub series: Vec<SlotRecord>,
}

/// Inputs to [`run_simulation`]. All meters must cover the same days.
pub struct Scenario<'a> {
    pub meters: &'a [MeterTimeline],
    pub cat: CatConfig,
    pub defense: Option<&'a DefenseModel>,
}

/// Milliseconds since the Unix epoch at midnight of `date`.
pub fn midnight_ms(date: NaiveDate) -> u64 {
    date.and_hms_opt(0, 0, 0).map_or(0, |t| t.and_utc().timestamp_millis().max(0) as u64)
}

/// Runs every slot through meters, aggregator and utility. Returns the report
/// and the eavesdropper's view: message presence per meter and day.
pub fn run_simulation<S: PairingSuite>(
    setup: &mut Setup<S>,
    scenario: &Scenario<'_>,
) -> Result<(SimulationReport, Vec<TranscriptLine>)> {
    let meters = scenario.meters;
    if meters.len() != setup.meters.len() {
        return Err(CoreError::Argument(format!("{} timelines for {} meters", meters.len(), setup.meters.len())));
    }
    let days = meters.first().map_or(0, |m| m.days.len());
    for m in meters {
        if m.days.len() != days || m.presence.len() != days {
            return Err(CoreError::Argument("every meter needs the same days, each with a presence label".into()));
        }
        if m.days.iter().any(|d| d.granularity_minutes != scenario.cat.granularity_minutes) {
            return Err(CoreError::Argument("day granularity differs from the CAT granularity".into()));
        }
    }
    if days == 0 {
        return Err(CoreError::Data("empty scenario".into()));
    }
    let slots_per_day = (1440 / scenario.cat.granularity_minutes) as usize;
    let slot_ms = setup.params.slot_ms;
    if slot_ms != scenario.cat.granularity_minutes as u64 * 60_000 {
        return Err(CoreError::Config("slot length differs from the CAT granularity".into()));
    }
    if let Some(model) = scenario.defense {
        for (sm, m) in setup.meters.iter_mut().zip(meters) {
            sm.meter = MeterState::new(model.window(), sm.seed, &m.history);
        }
    }
    let start = midnight_ms(meters[0].days[0].date);
    let n = meters.len();
    let mut shadow: Vec<MeterState> = (0..n).map(|_| MeterState::new(1, 0, &[])).collect();
    let mut held_units = vec![0u64; n];
    let mut truth: Vec<Vec<f64>> = vec![Vec::with_capacity(days * slots_per_day); n];
    let mut held: Vec<Vec<f64>> = vec![Vec::with_capacity(days * slots_per_day); n];
    let mut transcript = Vec::with_capacity(n * days);
    let mut series = Vec::with_capacity(days * slots_per_day);
    let (mut transmissions, mut spoofed, mut cat_tx) = (0, 0, 0);

    for d in 0..days {
        let mut bits = vec![vec![0u8; slots_per_day]; n];
        for t in 0..slots_per_day {
            let slot = d * slots_per_day + t;
            let now = start + slot as u64 * slot_ms;
            let readings: Vec<f64> = meters.iter().map(|m| m.days[d].readings[t]).collect();
            let plans: Vec<SlotPlan> = (0..n)
                .map(|i| setup.meters[i].plan(readings[i], meters[i].presence[d], &scenario.cat, scenario.defense.is_some()))
                .collect();
            let ask: Vec<bool> = plans.iter().map(|p| *p == SlotPlan::AskDefense).collect();
            let answers = match scenario.defense {
                Some(model) => decide_masked(model, setup.meters.iter_mut().map(|s| &mut s.meter.defense), &ask)?,
                None => vec![0; n],
            };
            let mut msgs = Vec::new();
            for i in 0..n {
                let transmit = match plans[i] {
                    SlotPlan::Cat => true,
                    SlotPlan::Silent => false,
                    SlotPlan::AskDefense => answers[i] == 1,
                };
                spoofed += (plans[i] == SlotPlan::AskDefense && transmit) as usize;
                if let Some(msg) = setup.meters[i].commit(&setup.params, readings[i], transmit, now)? {
                    held_units[i] = setup.params.codec.encode(readings[i])?;
                    msgs.push(msg);
                }
                bits[i][t] = transmit as u8;
                let plain = shadow[i].plan(readings[i], PresenceLabel::Present, scenario.cat.threshold_percent, false);
                shadow[i].commit(readings[i], plain == SlotPlan::Cat);
                cat_tx += (plain == SlotPlan::Cat) as usize;
                truth[i].push(readings[i]);
                held[i].push(setup.meters[i].meter.last_reported.unwrap_or(0.0));
            }
            transmissions += msgs.len();
            let agg = aggregator_collect(&mut setup.aggregator, &setup.params, &msgs, now)?;
            let recovered = eu_recover(&mut setup.eu, &setup.params, &agg, now)?;
            let expected_units: u64 = held_units.iter().sum();
            if recovered.units != expected_units {
                warn!("slot {slot}: recovered {} units, expected {expected_units}", recovered.units);
            }
            series.push(SlotRecord {
                slot,
                timestamp_ms: now,
                transmitted: msgs.len(),
                expected_units,
                recovered_units: recovered.units,
                actual_kwh: readings.iter().sum(),
            });
        }
        for (i, b) in bits.into_iter().enumerate() {
            let count = b.iter().map(|&x| x as usize).sum();
            transcript.push(TranscriptLine {
                consumer: meters[i].days[d].consumer_id.clone(),
                date: meters[i].days[d].date,
                bits: b.iter().map(|&x| char::from(b'0' + x)).collect(),
                count,
                presence: meters[i].presence[d],
                defense: scenario.defense.is_some(),
            });
        }
        debug!("day {d} done: {transmissions} transmissions so far");
    }
    let total_slots = days * slots_per_day;
    let periodic = n * total_slots;
    let cdf = aggregate_error_cdf(&truth, &held)?;
    let mismatched_slots = series.iter().filter(|s| s.expected_units != s.recovered_units).count();
    let report = SimulationReport {
        meters: n,
        slots: total_slots,
        defense: scenario.defense.is_some(),
        transmissions,
        spoofed,
        cat_transmissions: cat_tx,
        efficiency: efficiency(periodic, transmissions)?,
        cat_efficiency: efficiency(periodic, cat_tx)?,
        exact: mismatched_slots == 0,
        mismatched_slots,
        error_p95: cdf.abs_percentile(95.0),
        error_max: cdf.abs_percentile(100.0),
        counters: setup.aggregator.counters.clone(),
        series,
    };
    Ok((report, transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cat::apply_cat;
    use crate::data::DayRecord;
    use crate::defense::{build_defense, DecisionRule};
    use amiguard_crypto::ToySuite;
    use amiguard_nn::Params;

    const SLOT_MS: u64 = 30 * 60_000;

    fn setup(meters: usize, seed: u64) -> Setup<ToySuite> {
        let cfg = SecurityConfig { paillier_bits: 512, seed, slot_minutes: 30 };
        kdc_setup(ToySuite::from_seed(seed).unwrap(), meters, &cfg, 35).unwrap()
    }

    fn cat() -> CatConfig {
        CatConfig::new(10.0, 30).unwrap()
    }

    fn report(s: &mut Setup<ToySuite>, i: usize, kwh: f64, slot: u64) -> Option<ReadingMsg<ToySuite>> {
        sm_report(&mut s.meters[i], &s.params, kwh, PresenceLabel::Present, &cat(), None, slot * SLOT_MS).unwrap()
    }

    fn decrypt_units(s: &mut Setup<ToySuite>, agg: &AggMsg<ToySuite>) -> u64 {
        eu_recover(&mut s.eu, &s.params, agg, agg.timestamp_ms).unwrap().units
    }

    /// Slot 0 with every meter reporting its reading.
    fn bootstrap(s: &mut Setup<ToySuite>, readings: &[f64]) -> AggMsg<ToySuite> {
        let msgs: Vec<_> = readings.iter().enumerate().map(|(i, &r)| report(s, i, r, 0).unwrap()).collect();
        aggregator_collect(&mut s.aggregator, &s.params, &msgs, 0).unwrap()
    }

    /// Defense whose output always favours "transmit".
    fn always_transmit() -> DefenseModel {
        let spec = build_defense(crate::Rate::Per30Min);
        let mut params = Params::init(&spec, 1).unwrap();
        let bias = params.tensors_mut().last().unwrap();
        assert_eq!(bias.len(), 2);
        bias.data_mut().copy_from_slice(&[-50.0, 50.0]);
        DefenseModel::new(crate::Rate::Per30Min, params, DecisionRule::Argmax).unwrap()
    }

    #[test]
    fn setup_is_seeded_and_enrols_everyone() {
        let a = setup(3, 7);
        let b = setup(3, 7);
        assert_eq!(a.params.paillier, b.params.paillier);
        for (x, y) in a.meters.iter().zip(&b.meters) {
            assert_eq!(x.public(), y.public());
        }
        assert_eq!(a.aggregator.enrolled(), 3);
        assert_ne!(setup(3, 8).params.paillier, a.params.paillier);
    }

    #[test]
    fn eu_opens_what_meters_encrypt() {
        let mut s = setup(2, 1);
        let agg = bootstrap(&mut s, &[1.234, 0.5]);
        assert_eq!(decrypt_units(&mut s, &agg), 1734);
    }

    #[test]
    fn reports_follow_cat_and_verify() {
        let mut s = setup(1, 2);
        let first = report(&mut s, 0, 1.0, 0).unwrap();
        let payload = canonical_payload(&first.ciphertext, first.timestamp_ms);
        assert!(verify_single(&s.params.suite, &first.sigma, s.meters[0].public(), &payload));
        assert!(report(&mut s, 0, 1.05, 1).is_none());
        assert!(report(&mut s, 0, 1.2, 2).is_some());
        let err = sm_report(&mut s.meters[0], &s.params, 1.0, PresenceLabel::Present, &cat(), None, SLOT_MS);
        assert!(matches!(err, Err(CoreError::State(_))));
    }

    #[test]
    fn spoofed_reports_are_rerandomised() {
        let mut s = setup(1, 3);
        let model = always_transmit();
        s.meters[0].meter = MeterState::new(35, 0, &[1; 35]);
        let send = |s: &mut Setup<ToySuite>, slot| {
            sm_report(&mut s.meters[0], &s.params, 2.0, PresenceLabel::Absent, &cat(), Some(&model), slot * SLOT_MS)
                .unwrap()
                .unwrap()
        };
        let a = send(&mut s, 0);
        let b = send(&mut s, 1);
        assert_ne!(a.ciphertext, b.ciphertext);
        let dec = |c| s.eu.key.decrypt(&s.params.paillier, c).unwrap();
        assert_eq!(dec(&a.ciphertext), dec(&b.ciphertext));
    }

    #[test]
    fn silent_slots_reuse_the_store_and_deltas_are_exact() {
        let readings = [0.8, 1.1, 0.3, 2.0];
        let mut s = setup(4, 4);
        let agg0 = bootstrap(&mut s, &readings);
        let base = decrypt_units(&mut s, &agg0);
        assert_eq!(base, 4200);
        let agg1 = aggregator_collect(&mut s.aggregator, &s.params, &[], SLOT_MS).unwrap();
        assert_eq!(decrypt_units(&mut s, &agg1), base);
        let m = report(&mut s, 2, 0.9, 2).unwrap();
        let agg2 = aggregator_collect(&mut s.aggregator, &s.params, &[m], 2 * SLOT_MS).unwrap();
        assert_eq!(decrypt_units(&mut s, &agg2), base + 600);
    }

    #[test]
    fn bootstrap_needs_every_meter() {
        let mut s = setup(2, 5);
        let m = report(&mut s, 0, 1.0, 0).unwrap();
        assert!(matches!(aggregator_collect(&mut s.aggregator, &s.params, &[m], 0), Err(CoreError::State(_))));
    }

    #[test]
    fn forged_messages_are_excluded() {
        let mut s = setup(3, 6);
        let agg0 = bootstrap(&mut s, &[1.0, 1.0, 1.0]);
        let base = decrypt_units(&mut s, &agg0);
        let genuine = report(&mut s, 1, 2.0, 1).unwrap();
        // meter 0's key signing a message that claims to be meter 1
        let c = s.params.paillier.encrypt(&BigUint::from(999_000u64), &mut rand::thread_rng()).unwrap();
        let sigma = s.meters[0].keys.sign(&s.params.suite, &canonical_payload(&c, SLOT_MS));
        let forged = ReadingMsg { meter: 1, ciphertext: c, timestamp_ms: SLOT_MS, sigma };
        let mut tampered = genuine.clone();
        tampered.timestamp_ms += 1;
        let agg = aggregator_collect(&mut s.aggregator, &s.params, &[forged, tampered, genuine], SLOT_MS).unwrap();
        assert_eq!(decrypt_units(&mut s, &agg), base + 1000);
        assert_eq!(s.aggregator.counters.bad_signature, 2);
        assert_eq!(s.aggregator.counters.batch_failures, 1);
        assert!(s.aggregator.counters.flagged.contains(&1));
    }

    #[test]
    fn replays_are_rejected() {
        let mut s = setup(2, 7);
        let agg0 = bootstrap(&mut s, &[1.0, 1.0]);
        let base = decrypt_units(&mut s, &agg0);
        let m = report(&mut s, 0, 3.0, 1).unwrap();
        aggregator_collect(&mut s.aggregator, &s.params, &[m.clone()], SLOT_MS).unwrap();
        // within the window but not newer than what was accepted
        let agg2 = aggregator_collect(&mut s.aggregator, &s.params, &[m.clone()], 2 * SLOT_MS).unwrap();
        assert_eq!(s.aggregator.counters.replayed, 1);
        // outside the window
        let agg9 = aggregator_collect(&mut s.aggregator, &s.params, &[m], 9 * SLOT_MS).unwrap();
        assert_eq!(s.aggregator.counters.stale, 1);
        assert_eq!(decrypt_units(&mut s, &agg2), base + 2000);
        assert_eq!(decrypt_units(&mut s, &agg9), base + 2000);
    }

    #[test]
    fn eu_checks_signature_and_freshness() {
        let mut s = setup(1, 8);
        let agg = bootstrap(&mut s, &[1.0]);
        let mut bad = agg.clone();
        bad.ciphertext = s.params.paillier.add(&bad.ciphertext, &bad.ciphertext);
        assert!(matches!(eu_recover(&mut s.eu, &s.params, &bad, 0), Err(CoreError::Rejected(_))));
        assert!(matches!(eu_recover(&mut s.eu, &s.params, &agg, 5 * SLOT_MS), Err(CoreError::Rejected(_))));
        eu_recover(&mut s.eu, &s.params, &agg, 0).unwrap();
        assert!(matches!(eu_recover(&mut s.eu, &s.params, &agg, SLOT_MS), Err(CoreError::Rejected(_))));
    }

    fn timelines(meters: usize, days: usize, presence: PresenceLabel) -> Vec<MeterTimeline> {
        (0..meters)
            .map(|i| MeterTimeline {
                days: (0..days)
                    .map(|d| {
                        let date = NaiveDate::from_ymd_opt(2016, 5, 1 + d as u32).unwrap();
                        let r = (0..48).map(|t| 0.2 + ((t * (i + 3) + d * 7) % 13) as f64 * 0.037).collect();
                        DayRecord::new(format!("m{i}"), date, 30, r).unwrap()
                    })
                    .collect(),
                presence: vec![presence; days],
                history: vec![1; 35],
            })
            .collect()
    }

    #[test]
    fn simulation_is_exact_and_matches_cat() {
        let tl = timelines(5, 2, PresenceLabel::Present);
        let mut s = setup(5, 9);
        let (rep, transcript) = run_simulation(&mut s, &Scenario { meters: &tl, cat: cat(), defense: None }).unwrap();
        assert!(rep.exact);
        assert_eq!(rep.slots, 96);
        let mut cat_count = 0;
        for m in &tl {
            let mut last = None;
            for d in &m.days {
                let (p, _, l) = apply_cat(d, &cat(), last).unwrap();
                last = Some(l);
                cat_count += p.count();
            }
        }
        assert_eq!(rep.transmissions, cat_count);
        assert_eq!(rep.efficiency, rep.cat_efficiency);
        assert_eq!(transcript.len(), 10);
        assert_eq!(transcript.iter().map(|l| l.count).sum::<usize>(), cat_count);
        assert!(rep.error_max.unwrap() <= 10.0);
        let first: Vec<u64> = rep.series.iter().map(|r| r.recovered_units).collect();
        let (again, _) = run_simulation(&mut setup(5, 9), &Scenario { meters: &tl, cat: cat(), defense: None }).unwrap();
        assert_eq!(first, again.series.iter().map(|r| r.recovered_units).collect::<Vec<_>>());
    }

    #[test]
    fn defended_absence_costs_efficiency_but_stays_exact() {
        let mut tl = timelines(3, 1, PresenceLabel::Absent);
        for m in &mut tl {
            m.days[0].readings = vec![0.7; 48];
        }
        let model = always_transmit();
        let (rep, transcript) = run_simulation(&mut setup(3, 10), &Scenario { meters: &tl, cat: cat(), defense: Some(&model) }).unwrap();
        assert!(rep.exact);
        assert_eq!(rep.transmissions, 3 * 48);
        assert!(rep.efficiency < rep.cat_efficiency);
        assert_eq!(rep.spoofed, rep.transmissions - rep.cat_transmissions);
        assert!(transcript.iter().all(|l| l.defense && l.bits.chars().all(|c| c == '1')));
    }
}
