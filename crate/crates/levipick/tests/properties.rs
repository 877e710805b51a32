//! Property tests of the field model, image expansion, trap analysis and settling.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use levipick::acoustics::{total_pressure, velocity_at, ArrayState, PhysicalConstants, SourceState, Transducer, Vec3};
use levipick::dynamics::{settle, MotionParams};
use levipick::experiments::{ring_array, Setup};
use levipick::geometry::{build_cylinder, CylinderSpec};
use levipick::gorkov::{acoustic_force, find_axial_nodes, gorkov_potential, Particle, Stability};
use levipick::images::{add_images, image_count, Reflector};
use proptest::prelude::*;

fn constants() -> PhysicalConstants {
    PhysicalConstants::default()
}

prop_compose! {
    fn source()(
        x in -0.03..0.03f64, y in -0.03..0.03f64, z in 0.002..0.03f64,
        nx in -1.0..1.0f64, ny in -1.0..1.0f64, nz in 0.2..1.0f64,
        phase in 0.0..(2.0 * PI), amp in 0.1..1.0f64,
    ) -> SourceState {
        SourceState::new(Vec3::new(x, y, z), Vec3::new(nx, ny, nz), Transducer::default())
            .unwrap()
            .with_phase(phase)
            .with_amplitude(amp)
    }
}

// Probe well above every generated source.
prop_compose! {
    fn probe()(x in -0.02..0.02f64, y in -0.02..0.02f64, z in 0.04..0.08f64) -> Vec3 {
        Vec3::new(x, y, z)
    }
}

fn array(sources: Vec<SourceState>) -> ArrayState {
    ArrayState::new(sources, constants())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pressure_is_linear_in_sources(
        a in prop::collection::vec(source(), 1..6),
        b in prop::collection::vec(source(), 1..6),
        p in probe(),
    ) {
        let pa = total_pressure(&array(a.clone()), &p).unwrap();
        let pb = total_pressure(&array(b.clone()), &p).unwrap();
        let both = total_pressure(&array([a, b].concat()), &p).unwrap();
        let scale = pa.norm() + pb.norm();
        prop_assert!((both - pa - pb).norm() <= 1e-12 * scale);
    }

    #[test]
    fn phase_shift_is_equivariant(srcs in prop::collection::vec(source(), 1..8), dphi in -PI..PI, p in probe()) {
        let p0 = total_pressure(&array(srcs.clone()), &p).unwrap();
        let shifted: Vec<_> = srcs.iter().map(|s| s.with_phase(s.phase + dphi)).collect();
        let p1 = total_pressure(&array(shifted), &p).unwrap();
        let expected = p0 * num_complex::Complex64::from_polar(1.0, dphi);
        prop_assert!((p1 - expected).norm() <= 1e-12 * p0.norm().max(1e-300));
        prop_assert!((p1.norm() - p0.norm()).abs() <= 1e-12 * p0.norm());
    }

    #[test]
    fn on_axis_pressure_decays_as_inverse_distance(d in 0.01..0.2f64) {
        let s = SourceState::new(Vec3::zeros(), Vec3::z(), Transducer::default()).unwrap();
        let arr = array(vec![s]);
        let near = total_pressure(&arr, &Vec3::new(0.0, 0.0, d)).unwrap().norm();
        let far = total_pressure(&arr, &Vec3::new(0.0, 0.0, 2.0 * d)).unwrap().norm();
        prop_assert!((near / far - 2.0).abs() < 1e-6);
    }

    #[test]
    fn velocity_converges_at_second_order(srcs in prop::collection::vec(source(), 1..4), p in probe()) {
        let lambda = constants().wavelength();
        let v = |h: f64| velocity_at(&array(srcs.clone()).with_gradient_step(h), &p).unwrap();
        let diff = |a: [num_complex::Complex64; 3], b: [num_complex::Complex64; 3]| {
            a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
        };
        let h = lambda / 20.0;
        let (v1, v2, v3) = (v(h), v(h / 2.0), v(h / 4.0));
        let order = (diff(v1, v2) / diff(v2, v3)).log2();
        prop_assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn rigid_table_cancels_normal_velocity(srcs in prop::collection::vec(source(), 1..6)) {
        let table = Reflector::new(0.0, 1.0).unwrap();
        let arr = array(add_images(&srcs, &[table], 1).unwrap());
        let mut vz: f64 = 0.0;
        let mut vmax: f64 = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let p = Vec3::new(-0.02 + 0.01 * i as f64, -0.02 + 0.01 * j as f64, 0.0);
                let v = velocity_at(&arr, &p).unwrap();
                vz = vz.max(v[2].norm());
                vmax = vmax.max(v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
            }
        }
        prop_assert!(vz <= 1e-9 * vmax);
    }

    #[test]
    fn mirroring_twice_restores_the_source(s in source(), h in -0.01..0.0f64, c in 0.5..1.0f64) {
        let r = Reflector::new(h, c).unwrap();
        let back = r.mirror(&r.mirror(&s, 1, 0).unwrap(), 2, 0).unwrap();
        prop_assert!((back.position - s.position).norm() < 1e-15);
        prop_assert_eq!(back.normal, s.normal);
        prop_assert_eq!(back.phase, s.phase);
        assert_relative_eq!(back.amplitude, s.amplitude * c * c, max_relative = 1e-15);
    }

    #[test]
    fn expansion_is_deterministic_and_counted(
        srcs in prop::collection::vec(source(), 1..5),
        two in any::<bool>(),
        order in 0u32..4,
    ) {
        let mut refl = vec![Reflector::new(0.0, 1.0).unwrap()];
        if two {
            refl.push(Reflector::new(0.05, 0.9).unwrap());
        }
        let a = add_images(&srcs, &refl, order).unwrap();
        let b = add_images(&srcs, &refl, order).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert_eq!(a.len(), image_count(srcs.len(), refl.len(), order));
        prop_assert_eq!(&a[..srcs.len()], &srcs[..]);
    }

    #[test]
    fn amplitude_scaling_is_quadratic(srcs in prop::collection::vec(source(), 2..6), s in 0.1..3.0f64, p in probe()) {
        let part = Particle::default();
        let base = array(srcs.clone());
        let scaled = array(srcs.iter().map(|x| x.with_amplitude(x.amplitude * s)).collect());
        let u0 = gorkov_potential(&base, &p, &part).unwrap();
        let u1 = gorkov_potential(&scaled, &p, &part).unwrap();
        prop_assert!((u1 - s * s * u0).abs() <= 1e-10 * (s * s * u0).abs());
        let f0 = acoustic_force(&base, &p, &part).unwrap();
        let f1 = acoustic_force(&scaled, &p, &part).unwrap();
        prop_assert!((f1 - s * s * f0).norm() <= 1e-10 * (s * s * f0).norm());
    }

    #[test]
    fn global_phase_leaves_potential_unchanged(srcs in prop::collection::vec(source(), 2..6), dphi in -PI..PI, p in probe()) {
        let part = Particle::default();
        let base = array(srcs.clone());
        let shifted = array(srcs.iter().map(|x| x.with_phase(x.phase + dphi)).collect());
        let u0 = gorkov_potential(&base, &p, &part).unwrap();
        let u1 = gorkov_potential(&shifted, &p, &part).unwrap();
        // U is a difference of pressure and velocity terms; measure against the pressure term
        let c = constants();
        let p2 = total_pressure(&base, &p).unwrap().norm_sqr();
        let term = 2.0 * PI * part.radius.powi(3) * p2 / (6.0 * c.density * c.speed_of_sound.powi(2));
        prop_assert!((u1 - u0).abs() <= 1e-12 * (u0.abs() + term));
        let f0 = acoustic_force(&base, &p, &part).unwrap();
        let f1 = acoustic_force(&shifted, &p, &part).unwrap();
        // differencing U cancels digits, so the force resolves only to about eps |U| / h
        let resolution = (u0.abs() + term) / base.gradient_step;
        prop_assert!((f1 - f0).norm() <= 1e-12 * (f0.norm() + resolution));
    }

    #[test]
    fn cylinder_is_rotation_symmetric(n in 3usize..20, rings in 1usize..4) {
        let c = constants();
        let mut spec = CylinderSpec::default_for(&c);
        spec.transducers_per_ring = n;
        spec.rings = rings;
        spec.ring_heights.truncate(rings);
        let srcs = build_cylinder(&spec).unwrap();
        prop_assert_eq!(srcs.len(), n * rings);
        let a = 2.0 * PI / n as f64;
        for s in &srcs {
            let p = s.position;
            let r = Vec3::new(a.cos() * p.x - a.sin() * p.y, a.sin() * p.x + a.cos() * p.y, p.z);
            prop_assert!(srcs.iter().any(|t| (t.position - r).norm() < 1e-12));
        }
        let mut channels: Vec<_> = srcs.iter().map(|s| s.channel.unwrap()).collect();
        channels.sort();
        prop_assert_eq!(channels, (0..n * rings).collect::<Vec<_>>());
    }
}

fn standing_wave() -> ArrayState {
    let t = Transducer::default();
    let a = SourceState::new(Vec3::zeros(), Vec3::z(), t).unwrap();
    let b = SourceState::new(Vec3::new(0.0, 0.0, 0.06), -Vec3::z(), t).unwrap();
    array(vec![a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn settling_descends_and_respects_the_cap(
        x in -2e-3..2e-3f64, y in -2e-3..2e-3f64, z in 0.015..0.045f64,
    ) {
        let arr = standing_wave();
        let part = Particle::default();
        let params = MotionParams { decimation: 1, ..MotionParams::default() };
        let r = settle(&arr, &part, Vec3::new(x, y, z), &params).unwrap();
        let energy = |p: &Vec3| gorkov_potential(&arr, p, &part).unwrap() + part.weight() * p.z;
        for w in r.trajectory.windows(2) {
            let (a, b) = (w[0].position, w[1].position);
            prop_assert!((b - a).norm() <= params.displacement_cap * (1.0 + 1e-12));
            prop_assert!(energy(&b) <= energy(&a) + 1e-12);
        }
    }
}

#[test]
fn perturbed_particle_returns_to_its_node() {
    let setup = Setup::default();
    let arr = ring_array(&setup.rig, &[true, true, false, false]).unwrap();
    let part = setup.rig.particle;
    let lambda = constants().wavelength();
    let node = find_axial_nodes(&arr, &part, 1e-3, 0.012)
        .unwrap()
        .into_iter()
        .find(|n| n.stability == Stability::Stable)
        .unwrap();
    let params = MotionParams::default();
    let settled = |start: Vec3| settle(&arr, &part, start, &params).unwrap();
    let rest = settled(node.position);
    let back = settled(node.position + Vec3::new(0.0, 0.0, lambda / 8.0));
    assert!(rest.converged && back.converged);
    assert!((back.position - rest.position).norm() < 1e-4, "{:?} vs {:?}", back.position, rest.position);
    assert!(
        rest.position.z < node.position.z && node.position.z - rest.position.z < lambda / 4.0,
        "rest {:?} node {:?}",
        rest.position,
        node.position
    );
}

#[test]
fn nodes_of_the_standing_wave_are_half_a_wavelength_apart() {
    let lambda = constants().wavelength();
    let nodes: Vec<f64> = find_axial_nodes(&standing_wave(), &Particle::default(), 0.015, 0.045)
        .unwrap()
        .iter()
        .filter(|n| n.stability == Stability::Stable)
        .map(|n| n.position.z)
        .collect();
    assert!(nodes.len() >= 5);
    for w in nodes.windows(2) {
        assert!((w[1] - w[0] - lambda / 2.0).abs() < lambda / 200.0);
    }
}
