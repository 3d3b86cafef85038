//! Benchmarks for the hot paths: parsing, rendering, oracle calls, statistics.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use alignvet_bench::{
    synthetic_alignment_rdf, synthetic_mappings, synthetic_ontology_xml, SOURCE_BASE, TARGET_BASE,
};
use alignvet_core::alignment::{parse_alignment_rdf, AlignmentRole};
use alignvet_core::eval::wilcoxon_signed_rank;
use alignvet_core::ontology::{load_ontology, LexicalConfig};
use alignvet_core::oracle::{Oracle, SimulatedOracle};
use alignvet_core::prompt::{render, PromptTemplateId};

fn bench_ontology_parse(c: &mut Criterion) {
    let classes = 10_000usize;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.owl");
    std::fs::write(&path, synthetic_ontology_xml(SOURCE_BASE, classes)).unwrap();
    let lexical = LexicalConfig::default();

    let mut group = c.benchmark_group("ontology_parse");
    group.throughput(Throughput::Elements(classes as u64));
    group.bench_function("10k_classes", |b| {
        b.iter(|| load_ontology(&path, &lexical).unwrap())
    });
    group.finish();
}

fn bench_alignment_parse(c: &mut Criterion) {
    let cells = 5_000usize;
    let xml = synthetic_alignment_rdf(cells);

    let mut group = c.benchmark_group("alignment_parse");
    group.throughput(Throughput::Elements(cells as u64));
    group.bench_function("5k_cells", |b| {
        b.iter(|| parse_alignment_rdf(&xml, AlignmentRole::SystemOutput).unwrap())
    });
    group.finish();
}

fn bench_prompt_render(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let source_path = dir.path().join("source.owl");
    let target_path = dir.path().join("target.owl");
    std::fs::write(&source_path, synthetic_ontology_xml(SOURCE_BASE, 1_000)).unwrap();
    std::fs::write(&target_path, synthetic_ontology_xml(TARGET_BASE, 1_000)).unwrap();
    let lexical = LexicalConfig::default();
    let source = load_ontology(&source_path, &lexical).unwrap();
    let target = load_ontology(&target_path, &lexical).unwrap();
    let mappings = synthetic_mappings(1_000);

    let mut group = c.benchmark_group("prompt_render");
    group.throughput(Throughput::Elements(mappings.len() as u64));
    group.bench_function("P_NLF_EC_1k", |b| {
        b.iter(|| {
            for mapping in &mappings {
                render(PromptTemplateId::PNlfEc, mapping, &source, &target).unwrap();
            }
        })
    });
    group.finish();
}

fn bench_simulated_assess(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let source_path = dir.path().join("source.owl");
    let target_path = dir.path().join("target.owl");
    std::fs::write(&source_path, synthetic_ontology_xml(SOURCE_BASE, 1_000)).unwrap();
    std::fs::write(&target_path, synthetic_ontology_xml(TARGET_BASE, 1_000)).unwrap();
    let lexical = LexicalConfig::default();
    let source = load_ontology(&source_path, &lexical).unwrap();
    let target = load_ontology(&target_path, &lexical).unwrap();
    let mappings = synthetic_mappings(1_000);
    let prompts: Vec<_> = mappings
        .iter()
        .map(|m| render(PromptTemplateId::P, m, &source, &target).unwrap())
        .collect();
    let reference = mappings.iter().step_by(2).map(|m| m.key());
    let oracle = SimulatedOracle::new(0.2, 17, reference);
    let runtime = tokio::runtime::Builder::new_current_thread()
        .build()
        .unwrap();

    let mut group = c.benchmark_group("simulated_assess");
    group.throughput(Throughput::Elements(prompts.len() as u64));
    group.bench_function("1k_prompts", |b| {
        b.iter(|| {
            runtime.block_on(async {
                for prompt in &prompts {
                    oracle.assess(prompt).await.unwrap();
                }
            })
        })
    });
    group.finish();
}

fn bench_wilcoxon_exact(c: &mut Criterion) {
    // Twenty distinct nonzero differences: the largest sample the exact
    // subset-sum path handles, all 2^20 sign patterns counted.
    let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = (0..20).map(|i| -((i + 1) as f64) / 7.0).collect();

    c.bench_function("wilcoxon_exact_n20", |b| {
        b.iter(|| wilcoxon_signed_rank(&x, &y).unwrap())
    });
}

criterion_group!(
    benches,
    bench_ontology_parse,
    bench_alignment_parse,
    bench_prompt_render,
    bench_simulated_assess,
    bench_wilcoxon_exact
);
criterion_main!(benches);
