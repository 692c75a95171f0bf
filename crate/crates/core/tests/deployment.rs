use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use stentrom::dataset::{export_archive, import_archive, run_campaign, CampaignConfig, MuB, ParamSpace};
use stentrom::fem::{expansion_bench, Deployer, SolverConfig};
use stentrom::stent::{generate_stent, StentSpec};
use stentrom::vessel::{SignedDistance, VesselFrame, VesselModel};
use stentrom::Error;

fn deployer() -> &'static Deployer {
    static D: OnceLock<Deployer> = OnceLock::new();
    D.get_or_init(|| Deployer::new(generate_stent(&StentSpec::coarse()).unwrap(), SolverConfig::default()).unwrap())
}

fn curved_vessel() -> VesselModel {
    let space = ParamSpace::default();
    let mu = space.map_unit(&[0.5, 0.5, 0.5, 0.4, 0.5, 0.5]);
    VesselModel::from_params(&mu.vessel_params(), &VesselFrame::default()).unwrap()
}

#[test]
fn stent_recovers_its_free_radius_in_a_wide_tube() {
    let free_diameter = 2.0 * deployer().mesh.spec.node_radius();
    let bench = expansion_bench(deployer(), free_diameter + 1.5).unwrap();
    assert_eq!(bench.nodes_in_contact, 0);
    assert!(bench.max_radial_error < 0.05, "{bench:?}");
}

#[test]
fn narrow_tube_holds_the_stent_against_the_wall() {
    let bench = expansion_bench(deployer(), 3.0).unwrap();
    assert!(bench.nodes_in_contact > 0);
    assert!(bench.max_penetration < 0.01, "{bench:?}");
    assert!(bench.max_radial_error < 0.05, "{bench:?}");
}

#[test]
fn curved_deployment_stays_inside_and_is_repeatable() {
    let vessel = curved_vessel();
    let a = deployer().run(&vessel, 0.4).unwrap();
    assert!(a.report.converged);
    assert_eq!(a.u_h.len(), 3 * deployer().mesh.nodes.len());
    assert!(a.u_h.iter().all(|v| v.is_finite()));
    let r_w = deployer().mesh.spec.wire_radius;
    // penalty contact: a few hundredths of a mm at the stiffest bends
    for p in &a.deployed {
        assert!(vessel.signed_distance(p) + r_w < 0.05);
    }
    // centerline placed along the vessel keeps the crimped length
    assert!((a.ct.length() - a.c0.length()).abs() < 1e-6 * a.c0.length());
    let b = deployer().run(&vessel, 0.4).unwrap();
    assert_eq!(a.u_h, b.u_h);
}

#[test]
fn campaign_resumes_and_archives() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ds");
    let cfg = CampaignConfig { n_samples: 2, seed: 3, ..Default::default() };
    let ran = AtomicUsize::new(0);
    let first = run_campaign(&root, &cfg, &|_| {
        ran.fetch_add(1, Ordering::Relaxed);
    })
    .unwrap();
    assert_eq!(ran.load(Ordering::Relaxed), 2);
    assert_eq!(first.samples.len(), 2);
    for s in &first.samples {
        assert_eq!(s.mu_cl.len(), 9);
        assert_eq!(MuB::from_slice(&s.mu_b.0).unwrap(), s.mu_b);
        if s.converged {
            assert_eq!(s.u_h.as_ref().unwrap().len(), 3 * first.manifest.n_nodes);
        }
    }

    let again = run_campaign(&root, &cfg, &|_| {
        ran.fetch_add(1, Ordering::Relaxed);
    })
    .unwrap();
    assert_eq!(ran.load(Ordering::Relaxed), 2, "nothing recomputed");
    assert_eq!(again, first);

    let other = CampaignConfig { seed: 4, ..cfg };
    assert!(matches!(run_campaign(&root, &other, &|_| {}), Err(Error::State(_))));

    let archive = dir.path().join("ds.tar");
    export_archive(&root, &archive).unwrap();
    let restored = import_archive(&archive, &dir.path().join("copy")).unwrap();
    assert_eq!(restored, first);
    assert_eq!(
        restored.samples.iter().map(|s| s.u_h.clone()).collect::<Vec<_>>(),
        first.samples.iter().map(|s| s.u_h.clone()).collect::<Vec<_>>()
    );
}
