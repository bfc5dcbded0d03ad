"""Cost aggregation and the two formula-defined quality metrics.

Run:  python3 demos/04_cost_and_quality_metrics.py
"""

from ragcascade import (
    CostSample,
    HashEmbedder,
    LayerCostModel,
    LayerTag,
    gpu_time_per_query,
    weighted_cost,
    weighted_qps,
)
from ragcascade.metrics import (
    REFERENCE_USAGE_RATIOS,
    evaluate_answer_relevancy,
    evaluate_faithfulness,
)


def main():
    model = LayerCostModel()
    print("per-layer cost model (GPU-seconds/query, QPS):")
    for tag in LayerTag:
        print(
            f"  {tag.wire_name:<15} {model.gpu_seconds_per_query[tag]:>10.5f} s"
            f" {model.qps[tag]:>12,.2f} q/s"
        )

    cost = weighted_cost(model, REFERENCE_USAGE_RATIOS)
    qps = weighted_qps(model, REFERENCE_USAGE_RATIOS)
    print(f"\nweighted GPU time/query under reference usage: {cost:.5f} s")
    print(f"weighted throughput under reference usage:     {qps:,.0f} q/s")

    samples = [
        CostSample(wall_time=1.2, utilization=0.8, device_id="gpu0"),
        CostSample(wall_time=1.2, utilization=0.35, device_id="gpu1"),
        CostSample(wall_time=0.4, utilization=0.9, device_id="gpu2"),
    ]
    print(f"\nGPU time for one sampled answer: {gpu_time_per_query(samples):.3f} s")

    context = (
        "The basin survey finished in March. It covered forty sites. "
        "Funding came from the regional council."
    )
    answer = (
        "The basin survey finished in March. It covered forty sites. "
        "It was the largest survey ever run."
    )
    score, supported, total = evaluate_faithfulness(answer, context)
    print(f"\nfaithfulness: {supported}/{total} claims supported -> {score:.3f}")

    embedder = HashEmbedder()
    relevancy = evaluate_answer_relevancy(
        answer="The survey of the basin finished in March",
        input_text="When did the basin survey finish?",
        embedder=embedder,
    )
    off_topic = evaluate_answer_relevancy(
        answer="Turbines rotate at high speed",
        input_text="When did the basin survey finish?",
        embedder=embedder,
    )
    print(f"answer relevancy (on-topic):  {relevancy:.3f}")
    print(f"answer relevancy (off-topic): {off_topic:.3f}")


if __name__ == "__main__":
    main()
