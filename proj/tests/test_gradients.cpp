#include <doctest.h>

#include <cmath>
#include <functional>

#include "chembfn/bfn.hpp"
#include "chembfn/finetune.hpp"
#include "gradient_oracle.hpp"
#include "test_helpers.hpp"

using namespace chembfn;
using testing::compare_gradients;
using testing::GradReport;
using testing::toy_batch;

TEST_CASE("generative loss gradient matches central differences on toy dims") {
    Denoiser net = testing::toy_network(11, /*label_dim=*/2);
    const ScheduleParams schedule = default_schedule(5);
    const PaddedBatch batch = toy_batch();
    const std::vector<Labels> labels = {{0.5, -1.0}, {1.5, 0.25}};
    LossStepOptions opts;
    opts.labels = &labels;
    opts.p_uncond = 0.5;
    const Rng rng(99);

    Binding binding(net.params(), true);
    LossStep step = generative_loss_step(batch, net, binding, schedule, opts, rng);
    ag::backward(step.loss);
    const auto analytic = binding.gradients();

    auto loss = [&] {
        Binding b(net.params(), false);
        return generative_loss_step(batch, net, b, schedule, opts, rng).value;
    };
    CHECK(loss() == doctest::Approx(step.value).epsilon(1e-15));
    const GradReport rep = compare_gradients(net.mutable_params(), analytic, loss);
    INFO("worst tensor: " << rep.worst_name);
    CHECK(rep.worst_tensor_rel < 1e-4);
    CHECK(rep.worst_entry_rel < 1e-4);
}

TEST_CASE("generative loss gradient with a context mask") {
    Denoiser net = testing::toy_network(5);
    const ScheduleParams schedule = default_schedule(5);
    const PaddedBatch batch = toy_batch();
    std::vector<ClampMask> masks(2);
    for (std::size_t b = 0; b < 2; ++b) {
        masks[b].fixed = {true, false, false, false};
        masks[b].reference = batch.row(b);
    }
    LossStepOptions opts;
    opts.context_masks = &masks;
    const Rng rng(3);
    Binding binding(net.params(), true);
    LossStep step = generative_loss_step(batch, net, binding, schedule, opts, rng);
    ag::backward(step.loss);
    const auto analytic = binding.gradients();
    auto loss = [&] {
        Binding b(net.params(), false);
        return generative_loss_step(batch, net, b, schedule, opts, rng).value;
    };
    const GradReport rep = compare_gradients(net.mutable_params(), analytic, loss);
    INFO("worst tensor: " << rep.worst_name);
    CHECK(rep.worst_tensor_rel < 1e-4);
    CHECK(rep.worst_entry_rel < 1e-4);
}

TEST_CASE("fine-tune losses match central differences through head and backbone") {
    for (TaskKind task : {TaskKind::Regression, TaskKind::Classification}) {
        CAPTURE(to_string(task));
        Denoiser net = testing::toy_network(21);
        HeadConfig hc;
        hc.task = task;
        hc.input_dim = 16;
        hc.hidden_dim = 12;
        hc.n_outputs = task == TaskKind::Regression ? 2 : 3;
        PredictionHead head(hc, 4);
        std::vector<Labels> targets;
        if (task == TaskKind::Regression) {
            targets = {{0.3, -1.2}, {2.0, 0.7}};
            head.set_standardization({0.5, 0.1}, {1.5, 0.8});
        } else {
            targets = {{2.0}, {0.0}};
        }
        const PaddedBatch batch = toy_batch();
        const Rng rng(8);
        FinetuneStepOptions so;

        Binding nb(net.params(), true), hb(head.params(), true);
        LossStep step = finetune_step(batch, targets, net, nb, head, hb, so, rng);
        ag::backward(step.loss);
        const auto net_grads = nb.gradients();
        const auto head_grads = hb.gradients();

        auto loss = [&] {
            Binding b1(net.params(), false), b2(head.params(), false);
            return finetune_step(batch, targets, net, b1, head, b2, so, rng).value;
        };
        const GradReport head_rep = compare_gradients(head.mutable_params(), head_grads, loss);
        INFO("head worst: " << head_rep.worst_name);
        CHECK(head_rep.worst_tensor_rel < 1e-4);
        CHECK(head_rep.worst_entry_rel < 1e-4);
        const GradReport net_rep = compare_gradients(net.mutable_params(), net_grads, loss);
        INFO("backbone worst: " << net_rep.worst_name);
        CHECK(net_rep.worst_tensor_rel < 1e-4);
        CHECK(net_rep.worst_entry_rel < 1e-4);
    }
}
