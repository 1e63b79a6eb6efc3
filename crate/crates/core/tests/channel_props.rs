use crsma_core::channel::{generate_channels, mrc_coefficients, ChannelMode};
use crsma_core::SystemConfig;
use proptest::prelude::*;

fn config(users: usize, antennas: usize, seed: u64) -> SystemConfig {
    SystemConfig {
        users,
        antennas,
        seed,
        ..SystemConfig::default()
    }
}

#[test]
fn channel_hardening_with_many_antennas() {
    let draws = 200;
    let cfg = config(6, 256, 0);
    let mut mean = vec![0.0; 6];
    for seed in 0..draws {
        let ch = generate_channels(
            &SystemConfig {
                seed,
                ..cfg.clone()
            },
            ChannelMode::DisparityLadder,
        )
        .unwrap();
        for (k, m) in mean.iter_mut().enumerate() {
            *m += ch.norm_sq(k) / 256.0 / draws as f64;
        }
    }
    let ch = generate_channels(&cfg, ChannelMode::DisparityLadder).unwrap();
    for (k, m) in mean.iter().enumerate() {
        let tau = ch.tau()[k];
        assert!((m - tau).abs() <= 0.05 * tau, "user {k}: {m} vs {tau}");
    }
}

#[test]
fn cross_to_self_ratio_falls_with_antennas() {
    let seeds = 150;
    let mut previous = f64::INFINITY;
    for n in [4, 8, 16, 32, 64] {
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..seeds {
            let cfg = config(6, n, seed);
            let ch = generate_channels(&cfg, ChannelMode::DisparityLadder).unwrap();
            let c = mrc_coefficients(&ch, &cfg);
            for k in 0..6 {
                for j in 0..6 {
                    if k != j {
                        total += c.cross_gain[k][j] / c.self_gain[k];
                        count += 1.0;
                    }
                }
            }
        }
        let mean = total / count;
        assert!(mean < previous, "N={n}: {mean} !< {previous}");
        previous = mean;
    }
}

fn mode() -> impl Strategy<Value = ChannelMode> {
    prop_oneof![
        Just(ChannelMode::DisparityLadder),
        Just(ChannelMode::ExponentialMean)
    ]
}

proptest! {
    #[test]
    fn generation_is_pure(half in 1usize..5, n in 1usize..10, seed in any::<u64>(), mode in mode()) {
        let cfg = config(2 * half, n, seed);
        let a = generate_channels(&cfg, mode).unwrap();
        let b = generate_channels(&cfg, mode).unwrap();
        prop_assert_eq!(a.debug_dump(), b.debug_dump());
        for k in 0..cfg.users {
            prop_assert_eq!(a.bs(k), b.bs(k));
            prop_assert_eq!(a.bs(k).len(), n);
            prop_assert!(a.tau()[k] > 0.0 && a.tau()[k] <= 1.0);
            for j in 0..cfg.users {
                prop_assert_eq!(a.cross(k, j), b.cross(k, j));
            }
        }
        prop_assert_eq!(mrc_coefficients(&a, &cfg), mrc_coefficients(&b, &cfg));
    }

    #[test]
    fn mrc_coefficient_invariants(half in 1usize..5, n in 1usize..10, seed in any::<u64>(), mode in mode()) {
        let cfg = config(2 * half, n, seed);
        let ch = generate_channels(&cfg, mode).unwrap();
        let c = mrc_coefficients(&ch, &cfg);
        for k in 0..cfg.users {
            prop_assert_eq!(c.self_gain[k], c.cross_gain[k][k]);
            prop_assert!(c.noise_gain[k] >= 0.0);
            for j in 0..cfg.users {
                prop_assert!(c.cross_gain[k][j] >= 0.0);
                prop_assert!((c.cross_gain[k][j] - c.cross_gain[j][k]).abs() <= 1e-12 * c.cross_gain[k][j].max(1.0));
                prop_assert!(c.link_gain[k][j] >= 0.0);
            }
        }
    }
}
