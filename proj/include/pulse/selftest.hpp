#pragma once

// Self-contained correctness suites shared by the `selftest` command, the
// unit tests and the acceptance runner.

#include <cstdint>
#include <string>
#include <vector>

#include "pulse/model.hpp"

namespace pulse {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// "PASS  name  detail (1.23 s)"
std::string format_result(const CheckResult& r);

/// Smallest config the suites use: block_channels {4,6,8}, d_model 8.
PulseConfig tiny_config();

/// conv1d, matmul, dense and attention against the loop oracles on `cases`
/// random shapes each; max abs error must stay <= 1e-5.
CheckResult check_kernel_oracles(std::uint64_t seed, std::size_t cases = 100);

/// Every differentiable tape op vs central differences (eps 1e-3, 64-bit),
/// relative error < 1e-4.
CheckResult check_op_gradients(std::uint64_t seed);

/// Every parameter element of `config` vs central differences of the network
/// output in 64-bit mode, relative error < 1e-4.
CheckResult check_model_gradients(const PulseConfig& config, std::uint64_t seed);

/// Captured attention rows sum to 1 +- 1e-5 over `windows` random inputs.
CheckResult check_attention_rows(const PulseConfig& config, std::uint64_t seed, std::size_t windows);

/// Output clipper band and in-band identity on `streams` random HR streams.
CheckResult check_postprocess(std::uint64_t seed, std::size_t streams);

/// Loaded weights are finite and a forward pass on random windows stays
/// finite; a failure names the offending layer.
CheckResult check_model_health(const PulseParams& params, std::uint64_t seed);

/// Runs the suites above (model health only when `params` is given).
std::vector<CheckResult> run_selftest(const PulseParams* params, std::uint64_t seed = 1);

}  // namespace pulse
