use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hesunet::tensor::Conv2dArgs;
use hesunet::Tensor;

fn ramp(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n)
            .map(|i| ((i * 7919) % 997) as f32 / 997.0 - 0.5)
            .collect(),
    )
    .unwrap()
}

fn kernels(c: &mut Criterion) {
    let x = ramp(&[4, 16, 64, 64]);
    let w3 = ramp(&[16, 16, 3, 3]);
    let w1 = ramp(&[32, 16, 1, 1]);
    c.bench_function("conv3x3_4x16x64x64", |b| {
        b.iter(|| black_box(x.conv2d(&w3, None, Conv2dArgs::padding(1)).unwrap()))
    });
    c.bench_function("conv1x1_4x16x64x64", |b| {
        b.iter(|| black_box(x.conv2d(&w1, None, Conv2dArgs::default()).unwrap()))
    });
    c.bench_function("haar_4x16x64x64", |b| {
        b.iter(|| black_box(x.haar_dwt2_stacked().unwrap()))
    });
    c.bench_function("bilinear_x2_4x16x64x64", |b| {
        b.iter(|| black_box(x.bilinear_resize(128, 128).unwrap()))
    });
    c.bench_function("conv3x3_forward_backward", |b| {
        b.iter(|| {
            let w = Tensor::param(&[16, 16, 3, 3], w3.to_vec()).unwrap();
            let y = x
                .conv2d(&w, None, Conv2dArgs::padding(1))
                .unwrap()
                .sum()
                .unwrap();
            y.backward().unwrap();
            black_box(w.grad())
        })
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
