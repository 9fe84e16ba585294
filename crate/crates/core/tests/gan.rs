use cgan_anomaly::gan::{Discriminator, DiscriminatorTopology, Generator, GeneratorTopology};
use cgan_anomaly::{Direction, NoiseSource, Tensor32};

#[test]
fn generator_preserves_dims_at_all_scales() {
    for res in [64, 128, 256] {
        let topo = GeneratorTopology::for_resolution(res, 4).unwrap();
        assert_eq!(topo.stages, res.trailing_zeros() as usize - 2);
        let g = Generator::<f32>::new(topo, Direction::FrameToFlow, 1);
        let x = Tensor32::filled(3, res, res, 0.2);
        let y = g.forward(&x, NoiseSource::seeded(3)).unwrap();
        assert_eq!(y.dims(), (3, res, res));
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn patch_grid_and_receptive_field() {
    let d = DiscriminatorTopology::for_resolution(256, 64).unwrap();
    assert_eq!((d.grid_side(), d.receptive_field()), (Some(30), 70));
    assert_eq!(
        DiscriminatorTopology::for_resolution(64, 8).unwrap().grid_side(),
        Some(6)
    );
    let disc = Discriminator::<f32>::new(DiscriminatorTopology::for_resolution(128, 4).unwrap(), 2);
    let p = disc
        .forward(&Tensor32::filled(3, 128, 128, 0.0), &Tensor32::filled(3, 128, 128, 0.5))
        .unwrap();
    assert_eq!(p.dims(), (1, 14, 14));
}
