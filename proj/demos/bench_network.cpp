// Times one forward+backward pass through encoder and SF head for a few
// observation sizes. Useful for picking render scale and batch size.
#include <chrono>
#include <cstdio>

#include "sflab/envs/gridworld.hpp"
#include "sflab/nets/network.hpp"

using namespace sflab;

int main() {
    const auto layout = envs::center_wall(1, 5);
    for (int scale : {2, 3, 4}) {
        envs::RenderConfig rc;
        rc.scale = scale;
        envs::GridWorld env(layout, rc);
        Rng rng(1, "bench");
        const Tensor obs = env.reset(rng);
        nets::NetConfig cfg;
        cfg.obs_height = obs.dim(1);
        cfg.obs_width = obs.dim(2);
        auto p = nets::init_params(1, cfg);
        for (auto& v : p.task.value) v = 0.1;
        const int reps = 200;
        const auto t0 = std::chrono::steady_clock::now();
        double sink = 0.0;
        for (int i = 0; i < reps; ++i) {
            nets::EncoderTrace et;
            nets::HeadTrace ht;
            Tensor h = nets::encode(p.online.encoder, obs, &et);
            Tensor psi = nets::head_forward(p.online.head, h, p.task.value, &ht);
            Tensor g(psi.shape(), 1e-3);
            Tensor gin = nets::head_backward(p.online.head, ht, g);
            Tensor gh(Shape{cfg.sf_dim});
            for (std::size_t k = 0; k < cfg.sf_dim; ++k) gh[k] = gin[k];
            nets::encode_backward(p.online.encoder, et, gh);
            sink += psi[0];
        }
        const double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() / reps;
        std::printf("scale %d obs %zux%zu: %.1f us per sample fwd+bwd (%g)\n", scale, obs.dim(1), obs.dim(2), us, sink);
    }
}
