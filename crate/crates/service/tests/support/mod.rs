//! Fixtures shared by the service integration tests.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use axum::Router;
use image::{Rgb, RgbImage};
use interest_core::Extractor;
use interest_core::{FeatureStore, FeatureVector};
use interest_service::extract::PixelGridExtractor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A picture with a colored background and a few solid rectangles, so the
/// pixel-grid features differ between images and under occlusion.
pub fn scene(seed: u64, side: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbImage::from_pixel(side, side, Rgb([rng.random(), rng.random(), rng.random()]));
    for _ in 0..4 {
        let color = Rgb([rng.random(), rng.random(), rng.random()]);
        let (x0, y0) = (rng.random_range(0..side), rng.random_range(0..side));
        let (w, h) = (rng.random_range(4..side / 2), rng.random_range(4..side / 2));
        for y in y0..(y0 + h).min(side) {
            for x in x0..(x0 + w).min(side) {
                img.put_pixel(x, y, color);
            }
        }
    }
    img
}

/// Writes `n` PNG scenes named `img000.png`... under `dir/images`.
pub fn write_images(dir: &Path, n: usize, side: u32) -> Vec<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    (0..n)
        .map(|k| {
            let path = images.join(format!("img{k:03}.png"));
            scene(k as u64, side).save(&path).unwrap();
            path
        })
        .collect()
}

/// Images plus a feature file computed by the pixel-grid extractor, with
/// image paths relative to `dir`.
pub fn fixture(dir: &Path, n: usize) -> (FeatureStore, PathBuf) {
    let extractor = PixelGridExtractor::default();
    let records = write_images(dir, n, 64).into_iter().map(|path| {
        let image = image::open(&path).unwrap().to_rgb8();
        let id = path.file_stem().unwrap().to_string_lossy().into_owned();
        FeatureVector {
            image_path: format!("images/{id}.png"),
            image_id: id,
            features: extractor.extract(&image).unwrap(),
        }
    });
    let store = FeatureStore::from_records(records)
        .unwrap()
        .with_base_dir(dir);
    let features = dir.join("features.jsonl");
    store.write_jsonl(&features).unwrap();
    (store, features)
}

/// Serves `router` on an ephemeral port from a background runtime.
pub fn serve(router: Router) -> SocketAddr {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}
