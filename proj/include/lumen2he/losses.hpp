// Copyright (c) 2026 lumen2he contributors
// SPDX-License-Identifier: Apache-2.0
//
// The three-part CycleGAN objective: least-squares adversarial terms, L1
// cycle-consistency terms, and L1 identity terms, plus the halved
// discriminator objective.
#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "lumen2he/autodiff.hpp"
#include "lumen2he/models.hpp"

namespace lumen2he {

struct LossWeights {
    double lambda_cycle = 10.0;
    double lambda_identity = 5.0;
};

/// Per-step scalar breakdown of every loss term, one CSV row per step.
struct LossRecord {
    long long step = 0;
    double g_adv_a2b = 0, g_adv_b2a = 0;
    double cycle_a = 0, cycle_b = 0;
    double id_a = 0, id_b = 0;
    double g_total = 0;
    double d_a = 0, d_b = 0;

    static std::string csv_header() {
        return "step,g_adv_a2b,g_adv_b2a,cycle_a,cycle_b,id_a,id_b,g_total,d_a,d_b";
    }

    std::string csv_row() const {
        char buf[320];
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                      step, g_adv_a2b, g_adv_b2a, cycle_a, cycle_b, id_a, id_b, g_total, d_a, d_b);
        return buf;
    }

    /// Reports whether any term went non-finite; names the first offender.
    bool first_non_finite(std::string& term) const {
        const std::pair<const char*, double> terms[] = {
            {"g_adv_a2b", g_adv_a2b}, {"g_adv_b2a", g_adv_b2a}, {"cycle_a", cycle_a},
            {"cycle_b", cycle_b},     {"id_a", id_a},           {"id_b", id_b},
            {"g_total", g_total},     {"d_a", d_a},             {"d_b", d_b}};
        for (const auto& [name, v] : terms) {
            if (!std::isfinite(v)) {
                term = name;
                return true;
            }
        }
        return false;
    }
};

/// Least-squares GAN loss: mean over the score map of (pred - t)^2 with
/// t = 1 for real targets and t = 0 for fake targets.
template <typename T>
Var<T> adversarial_loss(const Var<T>& pred_map, bool target_real) {
    return mse_to_constant(pred_map, target_real ? T(1) : T(0));
}

/// Mean absolute difference.
template <typename T>
Var<T> l1_loss(const Var<T>& x, const Var<T>& y) {
    return l1_distance(x, y);
}

template <typename T>
struct GeneratorLosses {
    Var<T> total;           // drives the joint generator update
    Var<T> fake_a, fake_b;  // still attached to the tape; detach before reuse
    double adv_a2b = 0, adv_b2a = 0;
    double cycle_a = 0, cycle_b = 0;
    double id_a = 0, id_b = 0;

    /// Weighted sum recomputed in double from the recorded components; by
    /// construction satisfies the LossRecord identity.
    double total_value(const LossWeights& w) const {
        return adv_a2b + adv_b2a + w.lambda_cycle * (cycle_a + cycle_b) +
               w.lambda_identity * (id_a + id_b);
    }
};

namespace detail {

/// Temporarily drops requires_grad on a network's parameters so gradients
/// flow through it without accumulating into it.
template <typename T>
class FreezeGuard {
public:
    explicit FreezeGuard(Network<T>& net) : net_(net) {
        saved_.reserve(net.params().size());
        for (auto& p : net.params()) {
            saved_.push_back(p.var->requires_grad);
            p.var->requires_grad = false;
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < saved_.size(); ++i)
            net_.params()[i].var->requires_grad = saved_[i];
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    Network<T>& net_;
    std::vector<bool> saved_;
};

} // namespace detail

/// Full generator objective over one unpaired batch (a, b):
///   fake_b = G_A2B(a), fake_a = G_B2A(b)
///   adversarial:  D_B(fake_b) vs real, D_A(fake_a) vs real
///   cycle:        |G_B2A(fake_b) - a|, |G_A2B(fake_a) - b|
///   identity:     |G_B2A(a) - a|, |G_A2B(b) - b|
/// Discriminator parameters receive no gradient from this objective.
template <typename T>
GeneratorLosses<T> generator_objective(Network<T>& g_a2b, Network<T>& g_b2a, Network<T>& d_a,
                                       Network<T>& d_b, const Var<T>& a, const Var<T>& b,
                                       const LossWeights& w) {
    detail::FreezeGuard<T> freeze_a(d_a);
    detail::FreezeGuard<T> freeze_b(d_b);

    GeneratorLosses<T> out;
    out.fake_b = g_a2b.forward(a);
    out.fake_a = g_b2a.forward(b);

    Var<T> adv_a2b = adversarial_loss(d_b.forward(out.fake_b), true);
    Var<T> adv_b2a = adversarial_loss(d_a.forward(out.fake_a), true);
    Var<T> cyc_a = l1_loss(g_b2a.forward(out.fake_b), a);
    Var<T> cyc_b = l1_loss(g_a2b.forward(out.fake_a), b);
    Var<T> id_a = l1_loss(g_b2a.forward(a), a);
    Var<T> id_b = l1_loss(g_a2b.forward(b), b);

    const T lc = static_cast<T>(w.lambda_cycle);
    const T li = static_cast<T>(w.lambda_identity);
    out.total = weighted_sum<T>({{adv_a2b, T(1)},
                                 {adv_b2a, T(1)},
                                 {cyc_a, lc},
                                 {cyc_b, lc},
                                 {id_a, li},
                                 {id_b, li}});

    out.adv_a2b = static_cast<double>(scalar_value(adv_a2b));
    out.adv_b2a = static_cast<double>(scalar_value(adv_b2a));
    out.cycle_a = static_cast<double>(scalar_value(cyc_a));
    out.cycle_b = static_cast<double>(scalar_value(cyc_b));
    out.id_a = static_cast<double>(scalar_value(id_a));
    out.id_b = static_cast<double>(scalar_value(id_b));
    return out;
}

/// Discriminator objective on real vs. (detached) fake inputs, halved to slow
/// the discriminators relative to the generators.
template <typename T>
Var<T> discriminator_objective(Network<T>& d, const Var<T>& real, const Var<T>& fake) {
    Var<T> real_term = adversarial_loss(d.forward(real), true);
    Var<T> fake_term = adversarial_loss(d.forward(fake), false);
    return weighted_sum<T>({{real_term, T(0.5)}, {fake_term, T(0.5)}});
}

} // namespace lumen2he
