use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pointsift::geometry::{farthest_point_sampling, FpsStart, SpatialIndex};
use pointsift_bench::uniform_points;

fn octant_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("s8n");
    for n in [1024, 4096] {
        let pts = uniform_points(n, 1);
        let radius = 0.2;
        let index = SpatialIndex::from_positions(&pts, radius).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| {
                for q in 0..n {
                    black_box(index.s8n(q, radius).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn neighbor_queries(c: &mut Criterion) {
    let pts = uniform_points(4096, 2);
    let index = SpatialIndex::from_positions(&pts, 0.2).unwrap();
    let centers = &pts[..256];
    let mut group = c.benchmark_group("neighbors");
    group.throughput(Throughput::Elements(centers.len() as u64));
    group.bench_function("ball_query_r0.2_k32", |b| {
        b.iter(|| {
            for p in centers {
                black_box(index.ball_query(p, 0.2, 32).unwrap());
            }
        })
    });
    group.bench_function("knn_k3", |b| {
        b.iter(|| {
            for p in centers {
                black_box(index.knn(p, 3).unwrap());
            }
        })
    });
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("fps");
    for (n, m) in [(1024, 256), (4096, 1024)] {
        let pts = uniform_points(n, 3);
        group.bench_with_input(BenchmarkId::new("canonical", format!("{n}to{m}")), &m, |b, &m| {
            b.iter(|| farthest_point_sampling(black_box(&pts), m, FpsStart::Canonical).unwrap())
        });
    }
    group.finish();
}

fn index_build(c: &mut Criterion) {
    let pts = uniform_points(4096, 4);
    c.bench_function("grid_build_4096", |b| b.iter(|| SpatialIndex::from_positions(black_box(&pts), 0.2).unwrap()));
}

criterion_group!(benches, octant_search, neighbor_queries, sampling, index_build);
criterion_main!(benches);
