#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgen/dcae.hpp"

// Multi-bucket assignment, batch-size search against a pluggable memory/time
// model, and the training-stage cost model.

namespace vgen {

struct Bucket {
    int64_t resolution = 256;   // square pixel size; a sample matches on its longer side
    int64_t frame_lo = 1;
    int64_t frame_hi = 1;
    int64_t token_cap = 0;      // maximum token count per sample in this bucket
    int64_t batch_size = 1;
    int64_t cp_degree = 1;      // context-parallel degree (divides per-device tokens)
    double videos_per_s = 0.0;  // reference throughput metadata, echoed not recomputed
};

// Pluggable hardware model. All four functions must be monotone
// non-decreasing in tokens and batch.
struct CostModel {
    std::function<double(int64_t tokens, int64_t batch)> memory;
    std::function<double(int64_t tokens, int64_t batch)> step_time;
    std::function<double(int64_t tokens, int64_t batch)> encode_forward_time;
    std::function<double(int64_t tokens, int64_t batch)> backward_time;
    double memory_cap = 0.0;
    int64_t max_batch = 512;
};

// a + b*tokens + c*batch + d*tokens*batch
struct LinearCostTerms {
    double fixed = 0.0;
    double per_token = 0.0;
    double per_batch = 0.0;
    double per_token_batch = 0.0;

    double operator()(int64_t tokens, int64_t batch) const {
        return fixed + per_token * double(tokens) + per_batch * double(batch) +
               per_token_batch * double(tokens) * double(batch);
    }
};

CostModel linear_cost_model(const LinearCostTerms& memory, const LinearCostTerms& step,
                            const LinearCostTerms& encode_forward, const LinearCostTerms& backward,
                            double memory_cap, int64_t max_batch = 512);

struct StageSpec {
    std::string name;
    double dataset_size = 0.0;  // samples
    int64_t cp_degree = 1;
    int64_t iterations = 0;
    int64_t gpu_count = 0;
    double gpu_days = 0.0;
    double price_per_gpu_hour = 2.0;

    void validate() const;
};

// USD for one stage: gpu_days * 24 * price.
double stage_cost(const StageSpec& stage);

// The three reference training stages (H200 rental at $2/GPU-hour).
std::vector<StageSpec> reference_stages();

// Reference bucket tables: stages 1-2 (videos at 256px plus image buckets)
// and stage 3 (768px with context parallelism 4).
std::vector<Bucket> stage12_buckets();
std::vector<Bucket> stage3_buckets();

// Throws ConfigError if two buckets of the same resolution overlap in frames.
void validate_buckets(const std::vector<Bucket>& buckets);

// The unique bucket whose resolution matches the sample's longer side and
// whose frame range contains its frame count; nullopt when no bucket fits.
std::optional<Bucket> assign_bucket(int64_t frames, int64_t height, int64_t width,
                                    const std::vector<Bucket>& buckets);

// Batch-size search:
//  1. the reference config (highest token count) gets the largest batch that
//     fits in memory;
//  2. every other config gets the largest batch that fits in memory without
//     exceeding the reference step time;
//  3. additionally its AE-encode+forward time and its backward time may not
//     exceed the reference's.
// Returns one batch size per config (0 when nothing >= 1 is feasible);
// throws ConfigError when the reference itself has no feasible batch.
std::vector<int64_t> search_batch_sizes(const std::vector<int64_t>& config_tokens, const CostModel& model);

// Token cap for a bucket: token_count at the largest frame count <= frame_hi
// that lands on the spec's temporal grid.
int64_t bucket_token_cap(int64_t frame_hi, int64_t resolution, const CompressionSpec& spec);

}  // namespace vgen
