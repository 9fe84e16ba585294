use cgan_anomaly::perception::{test_double_extractor, ConvBackbone, FeatureExtractor};
use cgan_anomaly::{Error, Tensor32, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn double_declares_stride_eight_three_channels() {
    let e = test_double_extractor();
    assert_eq!(FeatureExtractor::<f64>::stride(&e), 8);
    assert_eq!(FeatureExtractor::<f64>::channels(&e), 3);
}

#[test]
fn double_is_linear_and_constant_preserving() {
    let e = test_double_extractor();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Tensor64::from_fn(3, 20, 28, |_, _, _| rng.gen_range(0.0..1.0));
    let b = Tensor64::from_fn(3, 20, 28, |_, _, _| rng.gen_range(0.0..1.0));
    let sum = a.zip_map(&b, |x, y| x + y).unwrap();
    let (fa, fb, fs) = (e.extract(&a).unwrap(), e.extract(&b).unwrap(), e.extract(&sum).unwrap());
    for ((x, y), s) in fa.values.data().iter().zip(fb.values.data()).zip(fs.values.data()) {
        assert!((x + y - s).abs() < 1e-12);
    }
    let c = e.extract(&Tensor64::filled(3, 20, 28, 0.375)).unwrap();
    assert!(c.values.data().iter().all(|&v| (v - 0.375).abs() < 1e-12));
    let z = e.extract(&Tensor64::zeros(3, 16, 16)).unwrap();
    assert!(z.values.data().iter().all(|&v| v == 0.0));
}

#[test]
fn outputs_follow_declared_stride_and_channels() {
    let double = test_double_extractor();
    let backbone = ConvBackbone::<f32>::seeded(5);
    for res in [64, 128, 256] {
        let img = Tensor32::filled(3, res, res, 0.5);
        let f = FeatureExtractor::<f32>::extract(&double, &img).unwrap();
        assert_eq!(f.values.dims(), (3, res / 8, res / 8));
        let g = backbone.extract(&img).unwrap();
        assert_eq!(g.values.dims(), (256, res / 16, res / 16));
        assert_eq!(g, backbone.extract(&img).unwrap());
    }
    // non-multiples of the stride round up
    let odd = Tensor32::filled(3, 50, 37, 0.1);
    assert_eq!(backbone.extract(&odd).unwrap().values.dims(), (256, 4, 3));
    assert_eq!(
        FeatureExtractor::<f32>::extract(&double, &odd).unwrap().values.dims(),
        (3, 7, 5)
    );
}

#[test]
fn single_channel_input_is_rejected() {
    let gray = Tensor32::filled(1, 16, 16, 0.5);
    assert!(matches!(
        FeatureExtractor::<f32>::extract(&test_double_extractor(), &gray),
        Err(Error::Shape(_))
    ));
    assert!(matches!(
        ConvBackbone::<f32>::seeded(1).extract(&gray),
        Err(Error::Shape(_))
    ));
}

#[test]
fn safetensors_weights_load_under_torchvision_names() {
    use safetensors::tensor::{serialize, Dtype, TensorView};
    let shapes: [(usize, usize, usize); 5] = [(64, 3, 11), (192, 64, 5), (384, 192, 3), (256, 384, 3), (256, 256, 3)];
    let mut blobs = Vec::new();
    for (i, &(o, c, k)) in shapes.iter().enumerate() {
        let w: Vec<u8> = (0..o * c * k * k)
            .flat_map(|j| ((j % 7) as f32 * 1e-3).to_le_bytes())
            .collect();
        let b: Vec<u8> = (0..o).flat_map(|_| (i as f32 * 0.01).to_le_bytes()).collect();
        blobs.push((i, o, c, k, w, b));
    }
    let keys = [0, 3, 6, 8, 10];
    let mut views = Vec::new();
    for (i, o, c, k, w, b) in &blobs {
        views.push((
            format!("features.{}.weight", keys[*i]),
            TensorView::new(Dtype::F32, vec![*o, *c, *k, *k], w).unwrap(),
        ));
        views.push((
            format!("features.{}.bias", keys[*i]),
            TensorView::new(Dtype::F32, vec![*o], b).unwrap(),
        ));
    }
    let bytes = serialize(views, &None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alexnet.safetensors");
    std::fs::write(&path, bytes).unwrap();
    let net = ConvBackbone::<f32>::from_safetensors(&path).unwrap();
    assert!(net.id().starts_with("alexnet-conv5-"));
    let f = net.extract(&Tensor32::filled(3, 64, 64, 0.5)).unwrap();
    assert_eq!(f.values.dims(), (256, 4, 4));

    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(
        ConvBackbone::<f32>::from_safetensors(&path),
        Err(Error::Format(_))
    ));
}
