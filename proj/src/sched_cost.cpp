#include "vgen/sched_cost.hpp"

#include <algorithm>
#include <map>

namespace vgen {

CostModel linear_cost_model(const LinearCostTerms& memory, const LinearCostTerms& step,
                            const LinearCostTerms& encode_forward, const LinearCostTerms& backward,
                            double memory_cap, int64_t max_batch) {
    CostModel m;
    m.memory = memory;
    m.step_time = step;
    m.encode_forward_time = encode_forward;
    m.backward_time = backward;
    m.memory_cap = memory_cap;
    m.max_batch = max_batch;
    return m;
}

void StageSpec::validate() const {
    if (dataset_size <= 0 || cp_degree < 1 || iterations <= 0 || gpu_count <= 0 || gpu_days <= 0 ||
        price_per_gpu_hour <= 0)
        throw ConfigError("stage '" + name + "': all fields must be positive");
}

double stage_cost(const StageSpec& stage) {
    stage.validate();
    return stage.gpu_days * 24.0 * stage.price_per_gpu_hour;
}

std::vector<StageSpec> reference_stages() {
    return {
        {"256px T2V", 70e6, 1, 85000, 224, 2240.0, 2.0},
        {"256px T/I2V", 10e6, 1, 13000, 192, 384.0, 2.0},
        {"768px T/I2V", 5e6, 4, 13000, 192, 1536.0, 2.0},
    };
}

std::vector<Bucket> stage12_buckets() {
    return {
        {256, 5, 33, 2304, 12, 1, 12.7},
        {256, 37, 65, 4352, 6, 1, 6.3},
        {256, 69, 97, 6400, 4, 1, 4.2},
        {256, 101, 129, 8448, 3, 1, 3.2},
        {256, 1, 1, 256, 45, 1, 47.6},
        {768, 1, 1, 2304, 13, 1, 13.8},
        {1024, 1, 1, 4096, 7, 1, 7.4},
    };
}

std::vector<Bucket> stage3_buckets() {
    return {
        {768, 5, 33, 20736, 6, 4, 0.25},
        {768, 37, 65, 39168, 4, 4, 0.17},
        {768, 69, 97, 57600, 3, 4, 0.13},
        {768, 101, 129, 76032, 2, 4, 0.08},
        {768, 1, 1, 2304, 38, 4, 1.60},
    };
}

void validate_buckets(const std::vector<Bucket>& buckets) {
    std::map<int64_t, std::vector<const Bucket*>> by_res;
    for (const auto& b : buckets) {
        if (b.frame_lo > b.frame_hi || b.frame_lo < 1)
            throw ConfigError("bucket: invalid frame range");
        by_res[b.resolution].push_back(&b);
    }
    for (auto& [res, group] : by_res) {
        std::sort(group.begin(), group.end(),
                  [](const Bucket* a, const Bucket* b) { return a->frame_lo < b->frame_lo; });
        for (size_t i = 1; i < group.size(); ++i)
            if (group[i]->frame_lo <= group[i - 1]->frame_hi)
                throw ConfigError("bucket: overlapping frame ranges at resolution " +
                                  std::to_string(res));
    }
}

std::optional<Bucket> assign_bucket(int64_t frames, int64_t height, int64_t width,
                                    const std::vector<Bucket>& buckets) {
    validate_buckets(buckets);
    int64_t res = std::max(height, width);
    for (const auto& b : buckets)
        if (b.resolution == res && frames >= b.frame_lo && frames <= b.frame_hi) return b;
    return std::nullopt;
}

std::vector<int64_t> search_batch_sizes(const std::vector<int64_t>& config_tokens, const CostModel& model) {
    if (config_tokens.empty()) throw ConfigError("batch search: no configurations");
    if (!model.memory || !model.step_time || !model.encode_forward_time || !model.backward_time)
        throw ConfigError("batch search: cost model incomplete");

    size_t ref = 0;
    for (size_t i = 1; i < config_tokens.size(); ++i)
        if (config_tokens[i] > config_tokens[ref]) ref = i;

    auto largest_fitting = [&](int64_t tokens, auto&& feasible) -> int64_t {
        for (int64_t b = model.max_batch; b >= 1; --b)
            if (feasible(tokens, b)) return b;
        return 0;
    };

    int64_t bs_ref = largest_fitting(config_tokens[ref], [&](int64_t t, int64_t b) {
        return model.memory(t, b) <= model.memory_cap;
    });
    if (bs_ref == 0)
        throw ConfigError("batch search: no feasible batch size for the highest-token configuration");

    double ref_step = model.step_time(config_tokens[ref], bs_ref);
    double ref_encfwd = model.encode_forward_time(config_tokens[ref], bs_ref);
    double ref_bwd = model.backward_time(config_tokens[ref], bs_ref);

    std::vector<int64_t> result(config_tokens.size(), 0);
    result[ref] = bs_ref;
    for (size_t i = 0; i < config_tokens.size(); ++i) {
        if (i == ref) continue;
        result[i] = largest_fitting(config_tokens[i], [&](int64_t t, int64_t b) {
            return model.memory(t, b) <= model.memory_cap && model.step_time(t, b) <= ref_step &&
                   model.encode_forward_time(t, b) <= ref_encfwd && model.backward_time(t, b) <= ref_bwd;
        });
    }
    return result;
}

int64_t bucket_token_cap(int64_t frame_hi, int64_t resolution, const CompressionSpec& spec) {
    if (frame_hi < 1) throw ConfigError("bucket_token_cap: frame_hi must be >= 1");
    int64_t t = 0;
    if (spec.causal) {
        t = frame_hi - ((frame_hi - 1) % spec.d_t);
    } else {
        t = frame_hi - (frame_hi % spec.d_t);
        if (t < 1) throw ConfigError("bucket_token_cap: no valid frame count on the temporal grid");
    }
    return token_count(t, resolution, resolution, spec);
}

}  // namespace vgen
