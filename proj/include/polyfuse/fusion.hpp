#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "polyfuse/factors.hpp"
#include "polyfuse/tensor.hpp"

namespace polyfuse {

enum class Variant { dense, cp, tucker, cmf, cmf_sr, concat };

/// Canonical display names: Dense, PF-CP, PF-Tucker, PF-CMF, PF-CMF-SR, Concat.
std::string_view variant_name(Variant v);
/// Parses a display name, case-insensitively. Throws on unknown names.
Variant variant_from_name(std::string_view name);

/// Dimensions and rank of one fusion layer. m is the joint dim, a and d the
/// audio and identity embedding dims, n the noise dim concatenated afterwards
/// (c = m + n). rank applies to CP/CMF variants, ranks to Tucker; both must be
/// absent (zero) elsewhere. For Concat the joint dim is a + d by construction.
struct FusionConfig {
    Variant variant = Variant::dense;
    std::size_t m = 0;
    std::size_t a = 0;
    std::size_t d = 0;
    std::size_t n = 0;
    std::size_t rank = 0;
    std::array<std::size_t, 3> ranks{0, 0, 0};

    std::size_t joint_dim() const { return variant == Variant::concat ? a + d : m; }
    std::size_t concat_dim() const { return joint_dim() + n; }
    /// Entry count of the dense joint tensor m x (a+1) x (d+1).
    std::size_t dense_entries() const { return joint_dim() * (a + 1) * (d + 1); }
    bool needs_rank() const {
        return variant == Variant::cp || variant == Variant::cmf ||
               variant == Variant::cmf_sr;
    }

    /// Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

/// Parameters of the dense reference layer: bias (m), first-order maps
/// w_a (m x a) and w_d (m x d), bilinear tensor w_ad (m x a x d).
struct DenseParams {
    DenseTensor bias, w_a, w_d, w_ad;
};

/// Joint dense parameter tensor w of dims m x (a+1) x (d+1), the
/// block-assembled form evaluated with phi-padded inputs.
struct JointParams {
    DenseTensor w;
};

/// The polynomial fusion layer: a config plus exactly one parameter bundle.
/// Layers are immutable once built; forwards are pure and safe to share
/// across threads. Training owns its student and mutates through params().
class FusionLayer {
public:
    using Params = std::variant<std::monostate, DenseParams, JointParams, CpFactors,
                                TuckerFactors, CmfParams>;

    FusionLayer(FusionConfig config, Params params);

    static FusionLayer zeros(const FusionConfig& config);
    /// All parameter entries i.i.d. N(0, stddev^2) drawn from rng.
    static FusionLayer random(const FusionConfig& config, std::mt19937_64& rng,
                              double stddev);
    /// Dense-variant layer holding the joint tensor directly.
    static FusionLayer from_joint_tensor(const FusionConfig& config, DenseTensor w);

    const FusionConfig& config() const { return config_; }
    const Params& params() const { return params_; }
    Params& params() { return params_; }

    /// Joint representation for the layer's variant; length joint_dim().
    DenseTensor forward(const DenseTensor& z_a, const DenseTensor& z_d) const;

private:
    FusionConfig config_;
    Params params_;
};

DenseTensor forward_dense(const DenseParams& p, const DenseTensor& z_a,
                          const DenseTensor& z_d);
/// w x_2 phi(z_a) x_3 phi(z_d) on the joint tensor.
DenseTensor forward_joint_dense(const DenseTensor& w, const DenseTensor& z_a,
                                const DenseTensor& z_d);
/// a1 * ((a2^T phi(z_a)) .* (a3^T phi(z_d))); never materializes the joint
/// tensor, O((m+a+d)k) time with O(k) temporaries.
DenseTensor forward_cp(const CpFactors& f, const DenseTensor& z_a,
                       const DenseTensor& z_d);
/// u1 * (core x_2 (u2^T phi(z_a)) x_3 (u3^T phi(z_d))).
DenseTensor forward_tucker(const TuckerFactors& f, const DenseTensor& z_a,
                           const DenseTensor& z_d);
/// bias + u*(v_a^T z_a) + u*(v_d^T z_d) + u*((b2^T z_a) .* (b3^T z_d)),
/// with b2/b3 reading through to v_a/v_d when rows are shared.
DenseTensor forward_cmf(const CmfParams& p, const DenseTensor& z_a,
                        const DenseTensor& z_d);

/// [z_tilde, z_n]; the noise may be empty.
DenseTensor concat_noise(const DenseTensor& z_tilde, std::span<const double> z_n);
/// The concatenation baseline [z_a, z_d]; carries no parameters.
DenseTensor forward_concat_baseline(const DenseTensor& z_a, const DenseTensor& z_d);

/// Number of stored parameters; tied arrays count once, Concat counts zero.
std::uint64_t param_count(const FusionConfig& config);

/// Named handle onto one unique parameter array of a layer. Tied arrays
/// appear exactly once, so iterating views covers each stored value once.
struct ParamView {
    std::string name;
    DenseTensor* tensor;
};
struct ConstParamView {
    std::string name;
    const DenseTensor* tensor;
};

std::vector<ParamView> param_views(FusionLayer& layer);
std::vector<ConstParamView> param_views(const FusionLayer& layer);

}  // namespace polyfuse
