// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#include "smokegs/optim/optim.hpp"

#include "smokegs/core/binio.hpp"
#include "smokegs/core/errors.hpp"
#include "smokegs/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace smokegs {

void OptimConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw invalid_argument_error("adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw invalid_argument_error("adam eps must be positive");
    }
    if (grad_clip < 0.0 || position_lr_decay < 0.0) {
        throw invalid_argument_error("grad_clip and position_lr_decay must be >= 0");
    }
    const double r[] = {rates.positions, rates.rotations, rates.scales,
                        rates.opacities, rates.sh,        rates.mlp};
    for (double v : r) {
        if (!(v > 0.0)) {
            throw invalid_argument_error("learning rates must be positive");
        }
    }
}

OptimState OptimState::zeros_like(const GaussianScene& scene) {
    OptimState s;
    auto pair = [](std::vector<float>& m, std::vector<float>& v, size_t n) {
        m.assign(n, 0.0f);
        v.assign(n, 0.0f);
    };
    pair(s.m_positions, s.v_positions, scene.positions.size());
    pair(s.m_rotations, s.v_rotations, scene.rotations.size());
    pair(s.m_log_scales, s.v_log_scales, scene.log_scales.size());
    pair(s.m_opacity, s.v_opacity, scene.opacity_logits.size());
    pair(s.m_sh, s.v_sh, scene.sh_coeffs.size());
    pair(s.m_w1, s.v_w1, scene.medium.w1.size());
    pair(s.m_b1, s.v_b1, scene.medium.b1.size());
    pair(s.m_w2, s.v_w2, scene.medium.w2.size());
    pair(s.m_b2, s.v_b2, scene.medium.b2.size());
    return s;
}

bool OptimState::matches(const GaussianScene& scene) const {
    return m_positions.size() == scene.positions.size() &&
           m_rotations.size() == scene.rotations.size() &&
           m_log_scales.size() == scene.log_scales.size() &&
           m_opacity.size() == scene.opacity_logits.size() &&
           m_sh.size() == scene.sh_coeffs.size() && m_w1.size() == scene.medium.w1.size() &&
           m_b1.size() == scene.medium.b1.size() && m_w2.size() == scene.medium.w2.size() &&
           m_b2.size() == scene.medium.b2.size() && v_positions.size() == m_positions.size() &&
           v_rotations.size() == m_rotations.size() &&
           v_log_scales.size() == m_log_scales.size() && v_opacity.size() == m_opacity.size() &&
           v_sh.size() == m_sh.size() && v_w1.size() == m_w1.size() &&
           v_b1.size() == m_b1.size() && v_w2.size() == m_w2.size() &&
           v_b2.size() == m_b2.size();
}

namespace {

void require_grad_shapes(const GaussianScene& scene, const GradientSet& g) {
    if (g.positions.size() != scene.positions.size() ||
        g.rotations.size() != scene.rotations.size() ||
        g.log_scales.size() != scene.log_scales.size() ||
        g.opacity_logits.size() != scene.opacity_logits.size() ||
        g.sh_coeffs.size() != scene.sh_coeffs.size() || g.w1.size() != scene.medium.w1.size() ||
        g.b1.size() != scene.medium.b1.size() || g.w2.size() != scene.medium.w2.size() ||
        g.b2.size() != scene.medium.b2.size()) {
        throw invalid_argument_error("gradient shapes do not match the scene");
    }
}

double grad_sq_norm(const GradientSet& g) {
    const auto& kt = kernels::active();
    double s = 0.0;
    for (const std::vector<double>* a :
         {&g.positions, &g.rotations, &g.log_scales, &g.opacity_logits, &g.sh_coeffs, &g.w1,
          &g.b1, &g.w2, &g.b2}) {
        s += kt.dot(a->data(), a->data(), a->size());
    }
    return s;
}

} // namespace

void adam_step(OptimState& state, GaussianScene& scene, const GradientSet& grads,
               const OptimConfig& cfg) {
    cfg.validate();
    require_grad_shapes(scene, grads);
    if (!state.matches(scene)) {
        throw invalid_argument_error("optimizer state does not match the scene");
    }
    if (!grads.all_finite()) {
        throw numeric_fault("non-finite gradient; step aborted");
    }

    const GradientSet* g = &grads;
    GradientSet clipped;
    if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(grad_sq_norm(grads));
        if (norm > cfg.grad_clip) {
            clipped = grads;
            const double scale = cfg.grad_clip / norm;
            for (std::vector<double>* a :
                 {&clipped.positions, &clipped.rotations, &clipped.log_scales,
                  &clipped.opacity_logits, &clipped.sh_coeffs, &clipped.w1, &clipped.b1,
                  &clipped.w2, &clipped.b2}) {
                for (double& v : *a) {
                    v *= scale;
                }
            }
            g = &clipped;
        }
    }

    const uint64_t t = state.step + 1;
    const double bc1 = 1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double bc2 = 1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    const double lr_pos =
        cfg.rates.positions *
        (cfg.position_lr_decay > 0.0
             ? std::exp(-cfg.position_lr_decay * static_cast<double>(state.step))
             : 1.0);

    const auto& kt = kernels::active();
    auto run = [&](std::vector<float>& p, std::vector<float>& m, std::vector<float>& v,
                   const std::vector<double>& gr, double lr) {
        kt.adam_update(p.data(), m.data(), v.data(), gr.data(), p.size(), lr, cfg.beta1,
                       cfg.beta2, cfg.eps, bc1, bc2);
    };
    run(scene.positions, state.m_positions, state.v_positions, g->positions, lr_pos);
    run(scene.rotations, state.m_rotations, state.v_rotations, g->rotations, cfg.rates.rotations);
    run(scene.log_scales, state.m_log_scales, state.v_log_scales, g->log_scales,
        cfg.rates.scales);
    run(scene.opacity_logits, state.m_opacity, state.v_opacity, g->opacity_logits,
        cfg.rates.opacities);
    run(scene.sh_coeffs, state.m_sh, state.v_sh, g->sh_coeffs, cfg.rates.sh);
    run(scene.medium.w1, state.m_w1, state.v_w1, g->w1, cfg.rates.mlp);
    run(scene.medium.b1, state.m_b1, state.v_b1, g->b1, cfg.rates.mlp);
    run(scene.medium.w2, state.m_w2, state.v_w2, g->w2, cfg.rates.mlp);
    run(scene.medium.b2, state.m_b2, state.v_b2, g->b2, cfg.rates.mlp);

    state.step = t;
    scene.bump_revision();
}

void save_adam_state(const OptimState& state, const std::string& path) {
    std::string body;
    binio::append_u64(body, state.step);
    binio::append_u64(body, state.m_positions.size() / 3);
    for (const std::vector<float>* a :
         {&state.m_positions, &state.v_positions, &state.m_rotations, &state.v_rotations,
          &state.m_log_scales, &state.v_log_scales, &state.m_opacity, &state.v_opacity,
          &state.m_sh, &state.v_sh, &state.m_w1, &state.v_w1, &state.m_b1, &state.v_b1,
          &state.m_w2, &state.v_w2, &state.m_b2, &state.v_b2}) {
        binio::append_f32_array(body, *a);
    }

    std::string file;
    file.reserve(body.size() + 12);
    file.append("SMAD", 4);
    binio::append_u32(file, kAdamStateVersion);
    file += body;
    binio::append_u32(file, binio::crc32_bytes(body.data(), body.size()));
    binio::write_file(path, file);
}

OptimState load_adam_state(const std::string& path) {
    const std::string file = binio::read_file(path);
    binio::Reader r(file.data(), file.size());
    r.magic("SMAD", "optimizer state");
    const uint32_t version = r.u32();
    if (version != kAdamStateVersion) {
        throw version_mismatch_error("unsupported optimizer-state version " +
                                     std::to_string(version));
    }
    const size_t body_offset = r.offset();
    OptimState s;
    s.step = r.u64();
    const uint64_t m64 = r.u64();
    if (m64 == 0 || m64 > (uint64_t(1) << 32)) {
        throw shape_mismatch_error("optimizer state declares implausible gaussian count");
    }
    const size_t m = static_cast<size_t>(m64);
    const MediumMLPWeights shape = MediumMLPWeights::zeros();
    const size_t sizes[] = {m * 3,           m * 3,
                            m * 4,           m * 4,
                            m * 3,           m * 3,
                            m,               m,
                            m * 16 * 3,      m * 16 * 3,
                            shape.w1.size(), shape.w1.size(),
                            shape.b1.size(), shape.b1.size(),
                            shape.w2.size(), shape.w2.size(),
                            shape.b2.size(), shape.b2.size()};
    std::vector<float>* arrays[] = {&s.m_positions,  &s.v_positions,  &s.m_rotations,
                                    &s.v_rotations,  &s.m_log_scales, &s.v_log_scales,
                                    &s.m_opacity,    &s.v_opacity,    &s.m_sh,
                                    &s.v_sh,         &s.m_w1,         &s.v_w1,
                                    &s.m_b1,         &s.v_b1,         &s.m_w2,
                                    &s.v_w2,         &s.m_b2,         &s.v_b2};
    for (size_t i = 0; i < 18; ++i) {
        r.f32_array(*arrays[i], sizes[i]);
    }
    const size_t body_size = r.offset() - body_offset;
    const uint32_t stored_crc = r.u32();
    if (r.remaining() != 0) {
        throw decode_error("optimizer state has trailing bytes");
    }
    const uint32_t crc = binio::crc32_bytes(file.data() + body_offset, body_size);
    if (crc != stored_crc) {
        throw crc_mismatch_error("optimizer state CRC mismatch");
    }
    return s;
}

int sh_warmup(uint64_t step, uint64_t interval) {
    if (interval == 0) {
        throw invalid_argument_error("sh warm-up interval must be >= 1");
    }
    return static_cast<int>(std::min<uint64_t>(3, step / interval));
}

} // namespace smokegs
