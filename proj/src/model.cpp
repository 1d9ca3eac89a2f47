#include "hofar/model.hpp"

#include <stdexcept>

namespace hofar {

namespace {

int coarse_extent(const TrainConfig& cfg) {
    int e = cfg.n;
    for (int i = 0; i < cfg.K - 1; ++i) e /= cfg.a;
    return e;
}

void push_matrix(std::vector<ParamHandle>& out, const std::string& name, Matrix& m) {
    if (!m.grad) throw std::runtime_error("param_handles: " + name + " has no gradient buffer");
    out.push_back({name, {m.rows, m.cols}, m.data, m.grad});
}

void push_tensor(std::vector<ParamHandle>& out, const std::string& name, Tensor& t) {
    if (!t.grad) throw std::runtime_error("param_handles: " + name + " has no gradient buffer");
    out.push_back({name, {t.h, t.w, t.c}, t.data, t.grad});
}

void push_head(std::vector<ParamHandle>& out, const std::string& prefix, FmHead& head) {
    for (size_t i = 0; i < head.blocks.size(); ++i) {
        FmBlockWeights& b = head.blocks[i];
        std::string p = prefix + ".block" + std::to_string(i) + ".";
        push_matrix(out, p + "mod_w", b.mod_w);
        push_matrix(out, p + "mod_b", b.mod_b);
        push_matrix(out, p + "wq", b.attn.wq);
        push_matrix(out, p + "wk", b.attn.wk);
        push_matrix(out, p + "wv", b.attn.wv);
        push_matrix(out, p + "out_w", b.out_w);
        push_matrix(out, p + "out_b", b.out_b);
    }
}

}  // namespace

Model make_model(const TrainConfig& cfg, Rng& rng) {
    validate_config(cfg);
    Model m;
    m.cfg = cfg;
    int e0 = coarse_extent(cfg);
    m.stack = make_ar_stack(cfg.width, cfg.c, cfg.m, cfg.num_classes, e0, e0, rng);
    m.null_embed = Tensor::zeros(e0, e0, cfg.width);
    for (double& v : *m.null_embed.data) v = 0.02 * rng.normal();
    m.null_embed.set_requires_grad();
    m.first = make_fm_head(HeadOrder::first, cfg.head_depth, cfg.c, rng);
    m.second = make_fm_head(HeadOrder::second, cfg.head_depth, cfg.c, rng);
    return m;
}

std::vector<ParamHandle> param_handles(Model& model) {
    std::vector<ParamHandle> out;
    push_matrix(out, "stack.in_embed", model.stack.in_embed);
    push_matrix(out, "stack.out_proj", model.stack.out_proj);
    for (size_t l = 0; l < model.stack.layers.size(); ++l) {
        ArLayer& layer = model.stack.layers[l];
        std::string p = "stack.layer" + std::to_string(l) + ".";
        push_matrix(out, p + "wq", layer.attn.wq);
        push_matrix(out, p + "wk", layer.attn.wk);
        push_matrix(out, p + "wv", layer.attn.wv);
        push_matrix(out, p + "w1", layer.ffn.w1);
        push_matrix(out, p + "b1", layer.ffn.b1);
        push_matrix(out, p + "w2", layer.ffn.w2);
        push_matrix(out, p + "b2", layer.ffn.b2);
    }
    for (size_t k = 0; k < model.stack.class_table.size(); ++k)
        push_tensor(out, "stack.class" + std::to_string(k), model.stack.class_table[k]);
    push_tensor(out, "null_embed", model.null_embed);
    push_head(out, "head_first", model.first);
    push_head(out, "head_second", model.second);
    return out;
}

}  // namespace hofar
