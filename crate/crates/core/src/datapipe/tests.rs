use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn spec(task: TaskId, batch_size: usize) -> DatasetSpec {
    DatasetSpec { task, video_count: 0, fps: 6.4, stride: 4, window_seconds: 20.0, clip_frames: 32, batch_size }
}

fn source(task: TaskId, videos: usize, batch_size: usize) -> PlanSource {
    PlanSource { spec: spec(task, batch_size), durations: vec![30.0; videos] }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn video_with(annotation: TaskAnnotation, frames: usize, fps: f64) -> Video {
    let features = Mat::from_vec(frames, 2, (0..frames * 2).map(|i| (i / 2) as f64).collect());
    Video { video_id: "v".into(), duration: frames as f64 / fps, fps, features, annotation }
}

#[test]
fn spec_frame_count_invariant() {
    assert!(spec(TaskId::Tad, 4).validate().is_ok());
    let mut bad = spec(TaskId::Tad, 4);
    bad.clip_frames = 31;
    assert!(bad.validate().is_err());
}

#[test]
fn crop_of_full_length_video_starts_at_zero() {
    let s = spec(TaskId::Tas, 1);
    let v = video_with(TaskAnnotation::Tas(vec![0; 128]), 128, 6.4);
    for seed in 0..10 {
        let (clip, ann) = crop_random_window(&v, &s, &mut rng(seed)).unwrap();
        assert_eq!(clip.window.start, 0.0);
        assert_eq!(clip.features.shape(), (32, 2));
        // Stride 4: model frame i reads raw frame 4i + 2.
        assert_eq!(clip.features.at(5, 0), 22.0);
        let TaskAnnotation::Tas(labels) = ann else { panic!() };
        assert_eq!(labels.len(), 32);
    }
}

#[test]
fn crop_is_seeded_and_restricts_annotations() {
    let s = spec(TaskId::Tad, 1);
    let instances = vec![TadInstance::new(1.0, 12.0, 0), TadInstance::new(25.0, 40.0, 1), TadInstance::new(55.0, 58.0, 2)];
    let v = video_with(TaskAnnotation::Tad(instances), 384, 6.4);
    let a = crop_random_window(&v, &s, &mut rng(3)).unwrap();
    assert_eq!(a, crop_random_window(&v, &s, &mut rng(3)).unwrap());
    for seed in 0..50 {
        let (clip, ann) = crop_random_window(&v, &s, &mut rng(seed)).unwrap();
        let w = &clip.window;
        assert!(w.start >= 0.0 && w.end() <= 60.0 + 1e-9);
        assert!(((w.start * 6.4).round() - w.start * 6.4).abs() < 1e-9, "start off the frame grid");
        let TaskAnnotation::Tad(inst) = ann else { panic!() };
        for i in &inst {
            assert!(i.start >= w.start && i.end <= w.end() && i.start < i.end);
            assert!(i.class_id <= 2);
        }
    }
}

#[test]
fn short_video_is_edge_padded() {
    let s = spec(TaskId::Gebd, 1);
    let v = video_with(TaskAnnotation::Gebd(vec![1.0]), 20, 6.4);
    let (clip, ann) = crop_random_window(&v, &s, &mut rng(0)).unwrap();
    assert_eq!(clip.window.start, 0.0);
    assert_eq!(clip.features.at(31, 0), 19.0);
    assert_eq!(ann, TaskAnnotation::Gebd(vec![1.0]));
    let empty = Video { features: Mat::zeros(0, 2), ..v };
    assert!(crop_random_window(&empty, &s, &mut rng(0)).is_err());
}

#[test]
fn sliding_window_starts() {
    let s = spec(TaskId::Tad, 1);
    let starts: Vec<f64> = sliding_windows("v", 60.0, &s, 10.0).unwrap().iter().map(|w| w.start).collect();
    assert_eq!(starts, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    let starts: Vec<f64> = sliding_windows("v", 47.0, &s, 10.0).unwrap().iter().map(|w| w.start).collect();
    assert_eq!(starts, vec![0.0, 10.0, 20.0, 27.0]);
    assert_eq!(sliding_windows("v", 5.0, &s, 10.0).unwrap().len(), 1);
    assert!(sliding_windows("v", 60.0, &s, 0.0).is_err());
}

#[test]
fn sliding_windows_cover_the_video() {
    let s = spec(TaskId::Tad, 1);
    for d in [20.5, 33.3, 71.0, 100.0] {
        for stride in [3.0, 10.0, 20.0] {
            let ws = sliding_windows("v", d, &s, stride).unwrap();
            assert_eq!(ws[0].start, 0.0);
            assert!((ws.last().unwrap().end() - d).abs() < 1e-9);
            assert!(ws.windows(2).all(|p| p[1].start <= p[0].end()));
        }
    }
}

#[test]
fn data_mixing_is_a_permutation() {
    let sources = vec![source(TaskId::Tad, 10, 4), source(TaskId::Tas, 20, 4), source(TaskId::Gebd, 30, 4)];
    let plan = plan_epoch_data_mixing(&sources, &all_videos(&sources), 32, &mut rng(1)).unwrap();
    let sizes: Vec<usize> = plan.batches().map(Vec::len).collect();
    assert_eq!(sizes, vec![32, 28]);
    let mut seen: Vec<(usize, usize)> = plan.entries().map(|e| (e.source, e.video)).collect();
    seen.sort_unstable();
    let expected: Vec<(usize, usize)> = [10, 20, 30].iter().enumerate().flat_map(|(s, &n)| (0..n).map(move |v| (s, v))).collect();
    assert_eq!(seen, expected);
    assert!(plan_epoch_data_mixing(&[], &[], 32, &mut rng(1)).is_err());
}

#[test]
fn batch_mixing_cycles_smaller_datasets() {
    // Group counts 50 / 60 / 60.
    let sources = vec![source(TaskId::Tad, 200, 4), source(TaskId::Tas, 1680, 28), source(TaskId::Gebd, 1920, 32)];
    let plan = plan_epoch_batch_mixing(&sources, &all_videos(&sources), false, &mut rng(2)).unwrap();
    assert_eq!(plan.iterations.len(), 60);
    for it in &plan.iterations {
        assert_eq!(it.len(), 3);
        for batch in it {
            assert!(batch.iter().all(|e| e.task == batch[0].task));
        }
    }
    // The first 50 detection batches cover the dataset exactly once.
    let mut first: Vec<usize> = plan.iterations[..50].iter().flat_map(|it| it[0].iter().map(|e| e.video)).collect();
    first.sort_unstable();
    assert_eq!(first, (0..200).collect::<Vec<_>>());
    let tas: usize = plan.iterations.iter().map(|it| it[1].len()).sum();
    assert_eq!(tas, 1680);
}

#[test]
fn balance_caps_boundary_exposure() {
    // Boundary dataset ten times the segmentation one.
    let sources = vec![source(TaskId::Tad, 40, 4), source(TaskId::Tas, 56, 28), source(TaskId::Gebd, 5600, 32)];
    // Groups: 10, 2, 175.
    let unbalanced = plan_epoch(&sources, MixingMode::BatchMixing, false, 32, &mut rng(3)).unwrap();
    assert_eq!(unbalanced.iterations.len(), 175);
    let balanced = plan_epoch(&sources, MixingMode::BatchMixing, true, 32, &mut rng(3)).unwrap();
    assert_eq!(balanced.iterations.len(), 10);
    let gebd = balanced.entries().filter(|e| e.task == TaskId::Gebd).count();
    assert_eq!(gebd, 10 * 32);

    assert_eq!(balance_cap(&sources, 2), Some(320));
    assert_eq!(balance_cap(&sources, 0), None);
    let active = apply_balance(&sources, MixingMode::DataMixing, &mut rng(4));
    assert_eq!(active[0].len(), 40);
    assert_eq!(active[1].len(), 56);
    assert_eq!(active[2].len(), 320);
    let data = plan_epoch(&sources, MixingMode::DataMixing, true, 32, &mut rng(4)).unwrap();
    assert_eq!(data.entries().filter(|e| e.task == TaskId::Gebd).count(), 320);

    // A small boundary dataset is left alone.
    let small = vec![source(TaskId::Tas, 56, 28), source(TaskId::Gebd, 20, 32)];
    assert_eq!(balance_cap(&small, 1), Some(20));
    assert_eq!(apply_balance(&small, MixingMode::DataMixing, &mut rng(5))[1].len(), 20);
}

#[test]
fn plans_are_seed_deterministic() {
    let sources = vec![source(TaskId::Tad, 13, 4), source(TaskId::Tas, 7, 3), source(TaskId::Gebd, 40, 8)];
    for mode in [MixingMode::DataMixing, MixingMode::BatchMixing] {
        for balance in [false, true] {
            let a = plan_epoch(&sources, mode, balance, 8, &mut rng(9)).unwrap();
            let b = plan_epoch(&sources, mode, balance, 8, &mut rng(9)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, plan_epoch(&sources, mode, balance, 8, &mut rng(10)).unwrap());
        }
    }
    assert!(plan_epoch(&sources, MixingMode::SingleTask, false, 8, &mut rng(0)).is_err());
    let single = plan_epoch(&sources[..1], MixingMode::SingleTask, false, 8, &mut rng(0)).unwrap();
    assert_eq!(single.iterations.len(), 4);
}

fn synth(task: TaskId, noise: f64, seed: u64) -> (Vec<SyntheticVideo>, PatternBank, SynthConfig) {
    let bank = PatternBank::new(32, 77);
    let (range, fps) = match task {
        TaskId::Tad => ((20.0, 40.0), 6.4),
        TaskId::Tas => ((40.0, 80.0), 3.2),
        TaskId::Gebd => ((10.0, 20.0), 6.4),
    };
    let mut cfg = SynthConfig::for_task(task, 12, 5, range, fps);
    cfg.noise_level = noise;
    let videos = synth_generate(&cfg, &bank, &mut rng(seed)).unwrap();
    (videos, bank, cfg)
}

#[test]
fn noiseless_synthetic_data_is_perfectly_separable() {
    for task in TaskId::ALL {
        let (videos, bank, cfg) = synth(task, 0.0, 1);
        assert_eq!(oracle_frame_accuracy(&videos, &bank, task, cfg.classes), 1.0, "{task}");
        let (noisy, bank, cfg) = synth(task, 0.15, 1);
        let acc = oracle_frame_accuracy(&noisy, &bank, task, cfg.classes);
        assert!(acc >= 0.99, "{task} {acc}");
    }
}

#[test]
fn synthetic_generation_is_seeded() {
    for task in TaskId::ALL {
        assert_eq!(synth(task, 0.2, 4).0, synth(task, 0.2, 4).0);
        assert_ne!(synth(task, 0.2, 4).0, synth(task, 0.2, 5).0);
    }
}

#[test]
fn annotations_match_planted_spans() {
    let (videos, _, cfg) = synth(TaskId::Tad, 0.0, 2);
    for v in &videos {
        let TaskAnnotation::Tad(inst) = &v.video.annotation else { panic!() };
        assert!((1..=5).contains(&inst.len()));
        let mut from_ann = vec![0; v.planted.len()];
        for i in inst {
            let (a, b) = ((i.start * cfg.fps).round() as usize, (i.end * cfg.fps).round() as usize);
            assert!(i.length() >= 2.0 - 1e-9 && i.length() <= 8.0 + 1e-9);
            from_ann[a..b].iter_mut().for_each(|p| *p = i.class_id + 1);
        }
        assert_eq!(from_ann, v.planted);
        assert!(inst.windows(2).all(|p| p[0].end < p[1].start));
    }

    let (videos, _, _) = synth(TaskId::Tas, 0.0, 2);
    for v in &videos {
        let TaskAnnotation::Tas(labels) = &v.video.annotation else { panic!() };
        assert_eq!(labels, &v.planted);
        assert_eq!(labels.len(), v.video.features.rows);
    }

    let (videos, _, cfg) = synth(TaskId::Gebd, 0.0, 2);
    for v in &videos {
        let TaskAnnotation::Gebd(ts) = &v.video.annotation else { panic!() };
        let frames: Vec<usize> = ts.iter().map(|t| (t * cfg.fps).floor() as usize).collect();
        let planted: Vec<usize> = v.planted.iter().enumerate().filter(|(_, &p)| p == 1).map(|(f, _)| f).collect();
        assert_eq!(frames, planted);
    }
}

#[test]
fn infeasible_packing_rejected() {
    let bank = PatternBank::new(8, 0);
    let mut cfg = SynthConfig::for_task(TaskId::Tad, 1, 3, (3.0, 3.0), 6.4);
    cfg.instances_range = (5, 5);
    assert!(synth_generate(&cfg, &bank, &mut rng(0)).is_err());
}

#[test]
fn model_rate_labels_follow_crops() {
    let (videos, _, _) = synth(TaskId::Tas, 0.0, 3);
    let s = DatasetSpec { task: TaskId::Tas, video_count: 0, fps: 3.2, stride: 4, window_seconds: 40.0, clip_frames: 32, batch_size: 1 };
    let v = &videos[0].video;
    let labels = labels_at_model_rate(v, &s).unwrap();
    let (_, ann) = crop_at(v, s.window(&v.video_id, 0.0).unwrap()).unwrap();
    let TaskAnnotation::Tas(window_labels) = ann else { panic!() };
    assert_eq!(&labels[..32], &window_labels[..]);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    labels.iter().for_each(|l| *counts.entry(*l).or_default() += 1);
    assert!(counts.len() > 1);
}
