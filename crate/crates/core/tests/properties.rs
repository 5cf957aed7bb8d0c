use proptest::prelude::*;

use servosim::actuator::{
    current_step, voltage_step, ActuatorModel, ControlLaw, MotorElectrical, PidGains, PidState,
    Servo,
};
use servosim::dataset::{split, Sample, TrajectoryLog, TrajectoryType, LogHeader};
use servosim::friction::{applied_friction, friction_budget, FrictionInputs, FrictionParams, ModelTag};
use servosim::sim::{equivalent_cv_params, rollout, BenchConfig, Pendulum, SimState};

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0..2.0f64]
}

fn v_s() -> impl Strategy<Value = f64> {
    0.01..5.0f64
}

fn alpha() -> impl Strategy<Value = f64> {
    0.1..5.0f64
}

fn torque() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn velocity() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -20.0..20.0f64, -1e-3..1e-3f64]
}

fn params_for(tag: ModelTag) -> BoxedStrategy<FrictionParams> {
    let n = tag.dimension();
    (proptest::collection::vec(coef(), n), v_s(), alpha())
        .prop_map(move |(mut v, vs, a)| {
            for (i, name) in tag.param_names().iter().enumerate() {
                match *name {
                    "v_s" => v[i] = vs,
                    "alpha" => v[i] = a,
                    _ => {}
                }
            }
            FrictionParams::from_vector(tag, &v).unwrap()
        })
        .boxed()
}

fn any_params() -> BoxedStrategy<FrictionParams> {
    prop_oneof![
        params_for(ModelTag::M1),
        params_for(ModelTag::M2),
        params_for(ModelTag::M3),
        params_for(ModelTag::M4),
        params_for(ModelTag::M5),
        params_for(ModelTag::M6),
    ]
    .boxed()
}

fn budget(p: &FrictionParams, tau_m: f64, tau_e: f64, omega: f64) -> f64 {
    friction_budget(p, FrictionInputs::new(tau_m, tau_e, omega)).unwrap()
}

proptest! {
    #[test]
    fn budget_is_non_negative(p in any_params(), tm in torque(), te in torque(), w in velocity()) {
        prop_assert!(budget(&p, tm, te, w) >= 0.0);
    }

    #[test]
    fn nesting_m2_m1(k_v in coef(), k_c in coef(), vs in v_s(), a in alpha(),
                     tm in torque(), te in torque(), w in velocity()) {
        let m2 = FrictionParams::M2 { k_v, k_c, k_cs: 0.0, v_s: vs, alpha: a };
        let m1 = FrictionParams::M1 { k_v, k_c };
        prop_assert_eq!(budget(&m2, tm, te, w).to_bits(), budget(&m1, tm, te, w).to_bits());
    }

    #[test]
    fn nesting_m5_m4(k_v in coef(), k_c in coef(), k_l in coef(), k_cs in coef(), k_ls in coef(),
                     vs in v_s(), a in alpha(), tm in torque(), te in torque(), w in velocity()) {
        let m4 = FrictionParams::M4 { k_v, k_c, k_l, k_cs, k_ls, v_s: vs, alpha: a };
        let m5 = FrictionParams::M5 {
            k_v, k_c, k_m: k_l, k_e: k_l, k_cs, k_ms: k_ls, k_es: k_ls, v_s: vs, alpha: a,
        };
        prop_assert_eq!(budget(&m5, tm, te, w).to_bits(), budget(&m4, tm, te, w).to_bits());
    }

    #[test]
    fn symmetric_in_velocity(
        p in prop_oneof![
            params_for(ModelTag::M1), params_for(ModelTag::M2),
            params_for(ModelTag::M3), params_for(ModelTag::M4),
        ],
        tm in torque(), te in torque(), w in velocity(),
    ) {
        prop_assert_eq!(budget(&p, tm, te, w), budget(&p, tm, te, -w));
    }

    #[test]
    fn m1_nondecreasing_in_speed(p in params_for(ModelTag::M1), w1 in 0.0..20.0f64, w2 in 0.0..20.0f64) {
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        prop_assert!(budget(&p, 1.0, -0.5, lo) <= budget(&p, 1.0, -0.5, -hi));
    }

    #[test]
    fn m3_nondecreasing_in_load(p in params_for(ModelTag::M3), w in velocity(),
                                te in torque(), d1 in 0.0..50.0f64, d2 in 0.0..50.0f64) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(budget(&p, te + lo, te, w) <= budget(&p, te - hi, te, w));
    }

    #[test]
    fn clip_idempotent_and_odd(stop in -100.0..100.0f64, b in 0.0..50.0f64) {
        let once = applied_friction(stop, b).unwrap();
        prop_assert_eq!(applied_friction(once, b).unwrap(), once);
        prop_assert_eq!(applied_friction(-stop, b).unwrap(), -once);
        prop_assert!(once.abs() <= b);
    }

    #[test]
    fn cv_adapter_reproduces_budget(p in any_params(), tm in torque(), te in torque(), w in velocity()) {
        let (kc, kv) = equivalent_cv_params(&p, tm, te, w).unwrap();
        prop_assert_eq!((kc + kv * w.abs()).to_bits(), budget(&p, tm, te, w).to_bits());
    }

    #[test]
    fn step_moves_velocity_toward_zero(
        p in any_params(),
        m in 0.1..5.0f64, l in 0.05..0.6f64, j_m in 0.0..0.05f64,
        theta in -7.0..7.0f64, w in velocity(), tm in torque(),
    ) {
        let pend = Pendulum::new(BenchConfig::new(m, l), &p, j_m).unwrap();
        let state = SimState::new(theta, w);
        let free = pend.friction_free_velocity(state, tm);
        let (next, rec) = pend.advance(state, tm);
        let (lo, hi) = if free >= 0.0 { (0.0, free) } else { (free, 0.0) };
        let dt_over_j = pend.bench().dt / pend.inertia();
        let scale = w.abs().max(free.abs()).max(rec.tau_m.abs() * dt_over_j).max(rec.tau_e.abs() * dt_over_j);
        let slack = 4.0 * f64::EPSILON * scale;
        prop_assert!(next.omega >= lo - slack && next.omega <= hi + slack,
            "omega {} not within [{lo}, {hi}]", next.omega);
        prop_assert!(rec.tau_f.abs() <= rec.budget);
        if rec.tau_stop.abs() <= rec.budget {
            prop_assert_eq!(next.omega, 0.0);
        }
    }

    #[test]
    fn voltage_bounded_and_passive(kp in 0.0..100.0f64, err in -3.0..3.0f64, w in -30.0..30.0f64) {
        let motor = MotorElectrical { k_t: 1.5, r: 5.0, u_max: 12.0, i_heat: None, j_m: 0.0 };
        let out = voltage_step(&motor, &PidGains::proportional(kp), &mut PidState::default(), 0.0, w, err, 1e-3);
        prop_assert!(out.voltage.abs() <= motor.u_max);
        prop_assert!(out.tau_m * w <= motor.u_max * motor.k_t * w.abs() / motor.r + 1e-12);
    }

    #[test]
    fn current_bounded_and_interval_nonempty(kp in 0.0..100.0f64, err in -3.0..3.0f64,
                                             w in -100.0..100.0f64, heat in 0.5..20.0f64) {
        let motor = MotorElectrical { k_t: 8.0, r: 1.2, u_max: 48.0, i_heat: Some(heat), j_m: 0.0 };
        let (lo, hi) = motor.current_bounds(w);
        prop_assert!(lo <= hi);
        let out = current_step(&motor, &PidGains::proportional(kp), &mut PidState::default(), 0.0, w, err, 1e-3);
        prop_assert!(out.current.abs() <= heat);
    }

    #[test]
    fn zero_error_fixed_point(kp in 0.0..100.0f64, theta in -4.0..4.0f64) {
        let motor = MotorElectrical { k_t: 8.0, r: 1.2, u_max: 48.0, i_heat: Some(12.0), j_m: 0.0 };
        let g = PidGains::proportional(kp);
        prop_assert_eq!(voltage_step(&motor, &g, &mut PidState::default(), theta, 0.0, theta, 1e-3).tau_m, 0.0);
        prop_assert_eq!(current_step(&motor, &g, &mut PidState::default(), theta, 0.0, theta, 1e-3).tau_m, 0.0);
    }

    #[test]
    fn split_partitions(n in 4usize..60, seed in any::<u64>()) {
        let entries: Vec<(String, TrajectoryType)> = (0..n)
            .map(|i| (format!("log{i:03}"), TrajectoryType::ALL[i % 4]))
            .collect();
        let s = split(&entries, seed).unwrap();
        prop_assert_eq!(s.identification.len() + s.validation.len(), n);
        prop_assert!(s.identification.iter().all(|id| !s.validation.contains(id)));
        prop_assert_eq!(&s, &split(&entries, seed).unwrap());
    }

    #[test]
    fn log_json_round_trip(
        samples in proptest::collection::vec(
            (proptest::option::of(-10.0..10.0f64),
             any::<f64>().prop_filter("finite", |v| v.is_finite())),
            2..40),
    ) {
        let actuator = ActuatorModel {
            law: ControlLaw::VoltagePid(PidGains::proportional(8.0)),
            motor: MotorElectrical { k_t: 1.6, r: 4.0, u_max: 12.0, i_heat: None, j_m: 0.01 },
            control_period: 0.001,
        };
        let samples: Vec<Sample> = samples
            .into_iter()
            .enumerate()
            .map(|(k, (target, measured))| Sample { t: k as f64 * 1e-3, target, measured })
            .collect();
        let log = TrajectoryLog {
            header: LogHeader::new("prop", TrajectoryType::LiftDrop, BenchConfig::new(1.0, 0.2), actuator),
            ground_truth: None,
            samples,
        };
        let back = TrajectoryLog::from_json(&log.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, log);
    }
}

#[test]
fn rollouts_are_deterministic() {
    let p = FrictionParams::M4 {
        k_v: 0.12,
        k_c: 0.08,
        k_l: 0.1,
        k_cs: 0.1,
        k_ls: 0.15,
        v_s: 0.3,
        alpha: 1.2,
    };
    let actuator = ActuatorModel {
        law: ControlLaw::VoltagePid(PidGains::proportional(16.0)),
        motor: MotorElectrical { k_t: 1.6, r: 4.0, u_max: 12.0, i_heat: None, j_m: 0.01 },
        control_period: 0.002,
    };
    let targets: Vec<Option<f64>> = (0..3000)
        .map(|k| (k < 2000).then(|| 3.0 + (k as f64 * 0.004).sin()))
        .collect();
    let bench = BenchConfig::new(1.0, 0.15);
    let a = rollout(&bench, &actuator, &p, SimState::at_rest(3.0), &targets).unwrap();
    let b = rollout(&bench, &actuator, &p, SimState::at_rest(3.0), &targets).unwrap();
    assert!(a.theta.iter().zip(&b.theta).all(|(x, y)| x.to_bits() == y.to_bits()));

    let mut s1 = Servo::new(actuator, bench.dt).unwrap();
    let mut s2 = Servo::new(actuator, bench.dt).unwrap();
    for (k, t) in targets.iter().enumerate() {
        let theta = a.theta[k];
        let omega = a.omega[k];
        assert_eq!(s1.torque(theta, omega, *t).to_bits(), s2.torque(theta, omega, *t).to_bits());
    }
}
