#include "drf/field.hpp"

#include <cmath>
#include <numbers>

#include "drf/io.hpp"
#include "drf/rng.hpp"

namespace drf {

FieldVariant parse_variant(const std::string& name) {
    if (name == "codenerf") return FieldVariant::codenerf;
    if (name == "M1" || name == "m1") return FieldVariant::m1;
    if (name == "M2" || name == "m2") return FieldVariant::m2;
    throw Error("field: unknown variant '" + name + "' (expected codenerf, M1 or M2)");
}

std::string variant_name(FieldVariant v) {
    switch (v) {
        case FieldVariant::codenerf: return "codenerf";
        case FieldVariant::m1: return "M1";
        case FieldVariant::m2: return "M2";
    }
    throw Error("field: invalid variant value");
}

void FieldConfig::validate() const {
    if (L_x < 1 || L_d < 0) throw Error("field: need L_x >= 1 and L_d >= 0");
    if (latent_dim < 1 || hidden_dim < 1 || v_dim < 1)
        throw Error("field: dimensions must be positive");
    if (n_layers_s < 1 || n_layers_t < 1)
        throw Error("field: each stage needs at least one layer");
}

nlohmann::json FieldConfig::to_json() const {
    return {{"L_x", L_x},
            {"L_d", L_d},
            {"latent_dim", latent_dim},
            {"hidden_dim", hidden_dim},
            {"v_dim", v_dim},
            {"n_layers_s", n_layers_s},
            {"n_layers_t", n_layers_t},
            {"variant", variant_name(variant)}};
}

FieldConfig FieldConfig::from_json(const nlohmann::json& j) {
    FieldConfig c;
    c.L_x = j.value("L_x", c.L_x);
    c.L_d = j.value("L_d", c.L_d);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.v_dim = j.value("v_dim", c.v_dim);
    c.n_layers_s = j.value("n_layers_s", c.n_layers_s);
    c.n_layers_t = j.value("n_layers_t", c.n_layers_t);
    c.variant = parse_variant(j.value("variant", std::string("codenerf")));
    c.validate();
    return c;
}

Wiring conditioning_modes(const FieldConfig& cfg) {
    Wiring w;
    w.stage1_inputs = {"enc_x", "z_s"};
    switch (cfg.variant) {
        case FieldVariant::codenerf:
            break;
        case FieldVariant::m1:
            w.stage1_inputs.insert(w.stage1_inputs.begin() + 1, "enc_d");
            w.stage1_takes_dirs = true;
            break;
        case FieldVariant::m2:
            w.stage1_inputs.push_back("z_t");
            w.stage1_takes_texture = true;
            break;
    }
    w.stage2_inputs = {"v", "enc_d", "z_t"};
    return w;
}

namespace {

int stage1_input_dim(const FieldConfig& cfg) {
    const Wiring w = conditioning_modes(cfg);
    int dim = cfg.enc_x_dim() + cfg.latent_dim;
    if (w.stage1_takes_dirs) dim += cfg.enc_d_dim();
    if (w.stage1_takes_texture) dim += cfg.latent_dim;
    return dim;
}

int stage2_input_dim(const FieldConfig& cfg) {
    return cfg.v_dim + cfg.enc_d_dim() + cfg.latent_dim;
}

DenseLayer init_layer(int in, int out, Rng& rng) {
    const double s = std::sqrt(6.0 / (in + out));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (auto& x : w) x = rng.uniform(-s, s);
    DenseLayer l;
    l.weight = Tensor::leaf({static_cast<std::size_t>(in), static_cast<std::size_t>(out)},
                            std::move(w));
    l.bias = Tensor::leaf({1, static_cast<std::size_t>(out)},
                          std::vector<double>(out, 0.0));
    return l;
}

std::vector<DenseLayer> init_stage(int in, int hidden, int out, int n_layers, Rng& rng) {
    std::vector<DenseLayer> layers;
    for (int i = 0; i < n_layers; ++i) {
        const int li = i == 0 ? in : hidden;
        const int lo = i == n_layers - 1 ? out : hidden;
        layers.push_back(init_layer(li, lo, rng));
    }
    return layers;
}

Tensor run_mlp(const std::vector<DenseLayer>& layers, Tensor h) {
    const std::size_t n = h.rows();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = matmul(h, layers[i].weight) + tile_rows(layers[i].bias, n);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

}  // namespace

FieldParams FieldParams::init(const FieldConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    FieldParams p;
    p.stage1 = init_stage(stage1_input_dim(cfg), cfg.hidden_dim, 1 + cfg.v_dim,
                          cfg.n_layers_s, rng);
    p.stage2 = init_stage(stage2_input_dim(cfg), cfg.hidden_dim, 3, cfg.n_layers_t, rng);
    return p;
}

std::vector<Tensor> FieldParams::all_parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : stage1) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    for (const auto& l : stage2) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

LatentTable LatentTable::init(std::size_t n_objects, int latent_dim, std::uint64_t seed) {
    Rng rng(seed);
    LatentTable t;
    auto sample = [&] {
        std::vector<double> z(latent_dim);
        for (auto& x : z) x = 0.01 * rng.normal();
        return Tensor::leaf({1, static_cast<std::size_t>(latent_dim)}, std::move(z));
    };
    for (std::size_t j = 0; j < n_objects; ++j) {
        t.shape_codes.push_back(sample());
        t.texture_codes.push_back(sample());
    }
    return t;
}

namespace {
Tensor mean_of(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw Error("field: mean of empty latent table");
    const std::size_t d = rows[0].cols();
    std::vector<double> m(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) m[i] += r.value()[i];
    for (auto& x : m) x /= static_cast<double>(rows.size());
    return Tensor::constant({1, d}, std::move(m));
}
}  // namespace

Tensor LatentTable::mean_shape() const { return mean_of(shape_codes); }
Tensor LatentTable::mean_texture() const { return mean_of(texture_codes); }

Tensor positional_encoding(const Tensor& p, int L) {
    if (L < 0) throw Error("field: positional encoding needs L >= 0");
    std::vector<Tensor> parts{p};
    double freq = std::numbers::pi;
    for (int l = 0; l < L; ++l) {
        Tensor scaled = scale(p, freq);
        parts.push_back(sin(scaled));
        parts.push_back(cos(scaled));
        freq *= 2.0;
    }
    return parts.size() == 1 ? p : concat_cols(parts);
}

FieldOutput eval_field(const FieldParams& params, const FieldConfig& cfg,
                       const Tensor& z_s, const Tensor& z_t,
                       const Tensor& x, const Tensor& d) {
    if (z_s.cols() != static_cast<std::size_t>(cfg.latent_dim) ||
        z_t.cols() != static_cast<std::size_t>(cfg.latent_dim))
        throw Error("field: latent code dim " + std::to_string(z_s.cols()) + "/" +
                    std::to_string(z_t.cols()) + " does not match config D=" +
                    std::to_string(cfg.latent_dim));
    if (x.cols() != 3 || d.cols() != 3 || x.rows() != d.rows())
        throw Error("field: positions and directions must both be {N,3}");

    const std::size_t n = x.rows();
    const Wiring wiring = conditioning_modes(cfg);
    Tensor enc_x = positional_encoding(x, cfg.L_x);
    Tensor enc_d = positional_encoding(d, cfg.L_d);

    std::vector<Tensor> in1{enc_x};
    if (wiring.stage1_takes_dirs) in1.push_back(enc_d);
    in1.push_back(tile_rows(z_s, n));
    if (wiring.stage1_takes_texture) in1.push_back(tile_rows(z_t, n));

    Tensor out1 = run_mlp(params.stage1, concat_cols(in1));
    FieldOutput fo;
    fo.sigma = softplus(slice_cols(out1, 0, 1));
    fo.v = slice_cols(out1, 1, cfg.v_dim);

    Tensor out2 = run_mlp(params.stage2,
                          concat_cols({fo.v, enc_d, tile_rows(z_t, n)}));
    fo.rgb = sigmoid(out2);
    return fo;
}

// ---- checkpoint serialization ----

namespace {

void put_array(Container& c, const std::string& name, const Tensor& t) {
    c.arrays[name] = t.value();
    c.header["shapes"][name] = t.shape();
}

Tensor get_leaf(const Container& c, const std::string& name) {
    auto it = c.arrays.find(name);
    if (it == c.arrays.end()) throw Error("field: checkpoint missing array '" + name + "'");
    std::vector<std::size_t> shape =
        c.header.at("shapes").at(name).get<std::vector<std::size_t>>();
    return Tensor::leaf(std::move(shape), it->second);
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    Container c;
    c.header["version"] = 1;
    c.header["kind"] = "checkpoint";
    c.header["config"] = config.to_json();
    c.header["meta"] = meta;
    c.header["n_objects"] = latents.size();
    for (std::size_t i = 0; i < params.stage1.size(); ++i) {
        put_array(c, "stage1." + std::to_string(i) + ".weight", params.stage1[i].weight);
        put_array(c, "stage1." + std::to_string(i) + ".bias", params.stage1[i].bias);
    }
    for (std::size_t i = 0; i < params.stage2.size(); ++i) {
        put_array(c, "stage2." + std::to_string(i) + ".weight", params.stage2[i].weight);
        put_array(c, "stage2." + std::to_string(i) + ".bias", params.stage2[i].bias);
    }
    for (std::size_t j = 0; j < latents.size(); ++j) {
        put_array(c, "z_s." + std::to_string(j), latents.shape_codes[j]);
        put_array(c, "z_t." + std::to_string(j), latents.texture_codes[j]);
    }
    write_container(path, c);
}

Checkpoint Checkpoint::load(const std::string& path) {
    Container c = read_container(path);
    if (c.header.value("kind", std::string()) != "checkpoint")
        throw Error("field: " + path + " is not a checkpoint container");
    Checkpoint ck;
    ck.config = FieldConfig::from_json(c.header.at("config"));
    ck.meta = c.header.value("meta", nlohmann::json::object());
    for (int i = 0; i < ck.config.n_layers_s; ++i)
        ck.params.stage1.push_back({get_leaf(c, "stage1." + std::to_string(i) + ".weight"),
                                    get_leaf(c, "stage1." + std::to_string(i) + ".bias")});
    for (int i = 0; i < ck.config.n_layers_t; ++i)
        ck.params.stage2.push_back({get_leaf(c, "stage2." + std::to_string(i) + ".weight"),
                                    get_leaf(c, "stage2." + std::to_string(i) + ".bias")});
    const std::size_t m = c.header.at("n_objects").get<std::size_t>();
    for (std::size_t j = 0; j < m; ++j) {
        ck.latents.shape_codes.push_back(get_leaf(c, "z_s." + std::to_string(j)));
        ck.latents.texture_codes.push_back(get_leaf(c, "z_t." + std::to_string(j)));
    }
    return ck;
}

}  // namespace drf
