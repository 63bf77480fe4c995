#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "drf/tensor.hpp"

namespace drf {

/// Conditioning variants. `codenerf` is the disentangled wiring: density and
/// the intermediate feature depend only on position and shape code. M1 also
/// feeds encoded view directions into the first stage; M2 feeds both codes
/// into it (single-embedding behaviour). Both break disentanglement and exist
/// for the ablation tests.
enum class FieldVariant { codenerf, m1, m2 };

FieldVariant parse_variant(const std::string& name);
std::string variant_name(FieldVariant v);

struct FieldConfig {
    int L_x = 10;      // positional-encoding frequencies for positions
    int L_d = 4;       // for view directions
    int latent_dim = 8;
    int hidden_dim = 64;
    int v_dim = 64;    // intermediate feature width
    int n_layers_s = 4;
    int n_layers_t = 2;
    FieldVariant variant = FieldVariant::codenerf;

    void validate() const;
    int enc_x_dim() const { return 3 + 6 * L_x; }
    int enc_d_dim() const { return 3 + 6 * L_d; }

    nlohmann::json to_json() const;
    static FieldConfig from_json(const nlohmann::json& j);
};

/// First-layer wiring per variant, as named input blocks. Consumed by
/// eval_field and asserted by the ablation tests.
struct Wiring {
    std::vector<std::string> stage1_inputs;  // density stage
    std::vector<std::string> stage2_inputs;  // color stage
    bool stage1_takes_dirs = false;
    bool stage1_takes_texture = false;
};

Wiring conditioning_modes(const FieldConfig& cfg);

/// One dense layer, weights {in,out} and bias {1,out}.
struct DenseLayer {
    Tensor weight;
    Tensor bias;
};

/// MLP weights of both stages. Stage 1 maps encoded position (+ codes) to
/// (raw density, feature v); stage 2 maps (v, encoded direction, texture
/// code) to raw rgb.
struct FieldParams {
    std::vector<DenseLayer> stage1;
    std::vector<DenseLayer> stage2;

    std::vector<Tensor> all_parameters() const;
    static FieldParams init(const FieldConfig& cfg, std::uint64_t seed);
};

/// Per-object latent codes, each row a {1,D} trainable leaf.
struct LatentTable {
    std::vector<Tensor> shape_codes;
    std::vector<Tensor> texture_codes;

    std::size_t size() const { return shape_codes.size(); }
    static LatentTable init(std::size_t n_objects, int latent_dim, std::uint64_t seed);
    Tensor mean_shape() const;
    Tensor mean_texture() const;
};

/// (p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(...)).
/// p is {N,3}; output {N, 3+6L}. L = 0 returns p itself.
Tensor positional_encoding(const Tensor& p, int L);

struct FieldOutput {
    Tensor sigma;  // {N,1}, softplus-activated, >= 0
    Tensor rgb;    // {N,3}, sigmoid-activated, in (0,1)
    Tensor v;      // {N,v_dim} intermediate feature
};

/// Evaluates the radiance field at positions x {N,3} with unit view
/// directions d {N,3}, conditioned on codes z_s/z_t (each {1,D}).
FieldOutput eval_field(const FieldParams& params, const FieldConfig& cfg,
                       const Tensor& z_s, const Tensor& z_t,
                       const Tensor& x, const Tensor& d);

/// Trained model bundle. `meta` carries dataset-derived render defaults
/// (near/far, mean rho, background) and the training step count.
struct Checkpoint {
    FieldConfig config;
    FieldParams params;
    LatentTable latents;
    nlohmann::json meta;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace drf
