#pragma once

// Online training loop: act epsilon-greedily on Q(S, . | w), store the
// transition, and every replay_period environment steps sample a batch and
// take one Adam step on the configured loss (lr_net for the networks, lr_task
// for w). The target network is maintained once per gradient step. On a task
// switch the environment is swapped and the buffer optionally cleared.

#include <chrono>
#include <deque>
#include <functional>
#include <optional>
#include <string>

#include "sflab/agents/config.hpp"
#include "sflab/agents/losses.hpp"
#include "sflab/agents/policy.hpp"
#include "sflab/agents/replay.hpp"
#include "sflab/envs/gridworld.hpp"
#include "sflab/envs/schedule.hpp"
#include "sflab/numkit/optim.hpp"

namespace sflab::agents {

// Network shape for an agent acting on observations of `obs_shape`.
inline nets::NetConfig net_config_for(const AgentConfig& cfg, nets::NetConfig base, const Shape& obs_shape) {
    if (obs_shape.size() != 3) throw DimensionError("observation must be [C,H,W]");
    base.obs_channels = obs_shape[0];
    base.obs_height = obs_shape[1];
    base.obs_width = obs_shape[2];
    base.n_actions = envs::kNumActions;
    base.head = cfg.loss_kind == LossKind::dqn ? nets::HeadKind::q_values : nets::HeadKind::successor;
    return base;
}

class Agent {
public:
    Agent(AgentConfig cfg, const nets::NetConfig& net, std::uint64_t seed)
        : cfg_(cfg), params_(nets::init_params(seed, net)), act_rng_(seed, "agents.act"),
          replay_rng_(seed, "agents.replay") {
        validate(cfg_);
        if (cfg_.loss_kind == LossKind::random) params_ = make_random_features_agent(std::move(params_));
        if (cfg_.loss_kind == LossKind::recon)
            decoder_ = init_decoder(seed, net.sf_dim, net.n_actions, cfg_.decoder_hidden,
                                    {net.obs_channels, net.obs_height, net.obs_width});
    }

    Tensor q(const Tensor& obs) const { return nets::online_q(params_, obs); }

    int act(const Tensor& obs, long step) { return act_epsilon_greedy(q(obs), step, cfg_, act_rng_); }

    // nullopt until the buffer holds min_replay transitions.
    std::optional<LossBreakdown> train_step(const ReplayBuffer& buffer) {
        auto batch = buffer.sample(static_cast<std::size_t>(cfg_.batch_size), cfg_.nstep, cfg_.gamma,
                                   static_cast<std::size_t>(cfg_.min_replay), replay_rng_);
        if (!batch) return std::nullopt;
        const LossBreakdown lb = compute_loss(params_, decoder_ ? &*decoder_ : nullptr, *batch, cfg_, true);
        apply_gradients();
        if (cfg_.target_mode == nets::TargetMode::polyak)
            nets::sync_target(params_, nets::TargetMode::polyak, cfg_.target_tau);
        else
            nets::sync_target(params_, nets::TargetMode::periodic_copy, 1.0, cfg_.target_period);
        ++updates_;
        return lb;
    }

    void apply_gradients() {
        const numkit::AdamConfig net_opt{cfg_.lr_net};
        if (params_.encoder_frozen) {
            for (ParamBlock* b : nets::encoder_blocks(params_.online.encoder)) b->zero_grad();
        } else {
            for (ParamBlock* b : nets::encoder_blocks(params_.online.encoder)) numkit::adam_step(*b, net_opt);
        }
        for (ParamBlock* b : nets::head_blocks(params_.online.head)) numkit::adam_step(*b, net_opt);
        if (decoder_)
            for (ParamBlock* b : decoder_blocks(*decoder_)) numkit::adam_step(*b, net_opt);
        if (cfg_.uses_task_vector()) numkit::adam_step(params_.task, numkit::AdamConfig{cfg_.lr_task});
        else params_.task.zero_grad();
    }

    const AgentConfig& config() const { return cfg_; }
    nets::NetworkParams& params() { return params_; }
    const nets::NetworkParams& params() const { return params_; }
    Decoder* decoder() { return decoder_ ? &*decoder_ : nullptr; }
    long updates() const { return updates_; }

private:
    AgentConfig cfg_;
    nets::NetworkParams params_;
    std::optional<Decoder> decoder_;
    Rng act_rng_;
    Rng replay_rng_;
    long updates_ = 0;
};

struct EpisodeRecord {
    int task_index = 0;
    int exposure = 0;
    int segment = 0;  // position in the schedule
    long global_step = 0;
    long episode_index = 0;
    double episode_return = 0.0;
    int episode_length = 0;
    double moving_avg_return = 0.0;  // trailing 20 episodes of the current segment
    double moving_avg_length = 0.0;
    double cumulative_return = 0.0;
    LossBreakdown loss;  // mean over the updates applied during the episode
    long updates = 0;    // total gradient steps so far
    double eps = 0.0;
    double frames_per_second = 0.0;
    double wallclock_ms = 0.0;
};

struct UpdateRecord {
    long update_index = 0;
    long global_step = 0;
    LossBreakdown loss;
};

struct TrainEvent {
    std::string kind;  // task_start, buffer_reset, episode_cut, early_stop
    int segment = 0;
    int task_index = 0;
    int exposure = 0;
    long global_step = 0;
    std::size_t buffer_size = 0;
    std::string detail;
};

class Trainer;

struct TrainCallbacks {
    std::function<void(const EpisodeRecord&)> on_episode;
    std::function<void(const UpdateRecord&)> on_update;
    std::function<void(const TrainEvent&)> on_event;
    // Called after every environment step; returning a reason stops the run.
    std::function<std::optional<std::string>(const Trainer&)> should_stop;
};

struct TrainOptions {
    envs::RenderConfig render;
    nets::NetConfig net;  // observation and head fields are filled in from the environment
    std::uint64_t seed = 0;
    int moving_window = 20;
};

class Trainer {
public:
    Trainer(envs::TaskSchedule schedule, AgentConfig cfg, TrainOptions opt)
        : schedule_(std::move(schedule)), opt_(opt), buffer_(static_cast<std::size_t>(cfg.buffer_capacity)),
          env_rng_(opt.seed, "envs.step") {
        envs::validate(schedule_);
        validate(cfg);
        const Shape obs = envs::observation_shape(schedule_.tasks.front().layout, opt_.render);
        for (const auto& t : schedule_.tasks)
            if (envs::observation_shape(t.layout, opt_.render) != obs)
                throw ConfigError("all tasks in a schedule must render to the same observation shape");
        agent_.emplace(cfg, net_config_for(cfg, opt_.net, obs), opt_.seed);
    }

    // Runs the whole schedule (or until should_stop fires). Returns false on early stop.
    bool run(const TrainCallbacks& cb = {}) {
        const auto t0 = std::chrono::steady_clock::now();
        auto elapsed_ms = [&] {
            return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        };
        auto emit = [&](TrainEvent e) {
            if (cb.on_event) cb.on_event(e);
        };
        for (std::size_t idx = 0;; ++idx) {
            const auto next = envs::schedule_next(schedule_, idx);
            if (!next) break;
            segment_ = static_cast<int>(idx);
            task_index_ = static_cast<int>(next->task_index);
            exposure_ = next->exposure;
            if (next->buffer_reset) {
                buffer_.clear();
                emit({"buffer_reset", segment_, task_index_, exposure_, global_step_, buffer_.size(), ""});
            }
            emit({"task_start", segment_, task_index_, exposure_, global_step_, buffer_.size(),
                  next->task->layout.name});
            env_.emplace(next->task->layout, opt_.render, next->task->max_steps_per_episode);
            recent_returns_.clear();
            recent_lengths_.clear();
            segment_start_ = global_step_;

            Frame obs = pool_.intern(env_->reset(env_rng_));
            double ep_return = 0.0;
            int ep_len = 0;
            LossBreakdown loss_sum;
            long loss_count = 0;
            for (long t = 0; t < next->task->training_steps; ++t) {
                const int a = agent_->act(*obs, eps_step());
                envs::StepResult r = env_->step(static_cast<envs::Action>(a), env_rng_);
                Frame obs_next = pool_.intern(r.obs);
                buffer_.store({obs, a, r.reward, obs_next, r.terminal, r.done && !r.terminal});
                ++global_step_;
                ep_return += r.reward;
                cumulative_return_ += r.reward;
                ++ep_len;
                obs = obs_next;

                if (global_step_ % agent_->config().replay_period == 0) {
                    if (auto lb = agent_->train_step(buffer_)) {
                        loss_sum.total += lb->total;
                        loss_sum.l_psi += lb->l_psi;
                        loss_sum.l_w += lb->l_w;
                        loss_sum.l_aux += lb->l_aux;
                        ++loss_count;
                        if (cb.on_update) cb.on_update({agent_->updates(), global_step_, *lb});
                    }
                }

                if (r.done) {
                    EpisodeRecord rec;
                    rec.task_index = task_index_;
                    rec.exposure = exposure_;
                    rec.segment = segment_;
                    rec.global_step = global_step_;
                    rec.episode_index = episode_index_++;
                    rec.episode_return = ep_return;
                    rec.episode_length = ep_len;
                    push_window(recent_returns_, ep_return);
                    push_window(recent_lengths_, ep_len);
                    rec.moving_avg_return = mean(recent_returns_);
                    rec.moving_avg_length = mean(recent_lengths_);
                    rec.cumulative_return = cumulative_return_;
                    if (loss_count > 0) {
                        const double n = static_cast<double>(loss_count);
                        rec.loss = {loss_sum.total / n, loss_sum.l_psi / n, loss_sum.l_w / n, loss_sum.l_aux / n};
                    }
                    rec.updates = agent_->updates();
                    rec.eps = epsilon_at(eps_step(), agent_->config());
                    rec.wallclock_ms = elapsed_ms();
                    rec.frames_per_second = rec.wallclock_ms > 0 ? global_step_ / (rec.wallclock_ms / 1000.0) : 0.0;
                    last_episode_ = rec;
                    if (cb.on_episode) cb.on_episode(rec);
                    obs = pool_.intern(env_->reset(env_rng_));
                    ep_return = 0.0;
                    ep_len = 0;
                    loss_sum = {};
                    loss_count = 0;
                }
                if (cb.should_stop) {
                    if (auto why = cb.should_stop(*this)) {
                        emit({"early_stop", segment_, task_index_, exposure_, global_step_, buffer_.size(), *why});
                        return false;
                    }
                }
            }
            if (ep_len > 0)
                emit({"episode_cut", segment_, task_index_, exposure_, global_step_, buffer_.size(),
                      std::to_string(ep_len) + " steps discarded at task end"});
        }
        return true;
    }

    Agent& agent() { return *agent_; }
    const Agent& agent() const { return *agent_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    long global_step() const { return global_step_; }
    int task_index() const { return task_index_; }
    int exposure() const { return exposure_; }
    int segment() const { return segment_; }
    const std::optional<EpisodeRecord>& last_episode() const { return last_episode_; }
    const std::deque<double>& recent_lengths() const { return recent_lengths_; }
    const envs::TaskSchedule& schedule() const { return schedule_; }
    std::size_t frames_interned() const { return pool_.size(); }

private:
    void push_window(std::deque<double>& q, double v) {
        q.push_back(v);
        while (static_cast<int>(q.size()) > opt_.moving_window) q.pop_front();
    }
    static double mean(const std::deque<double>& q) {
        double s = 0.0;
        for (double v : q) s += v;
        return q.empty() ? 0.0 : s / static_cast<double>(q.size());
    }

    envs::TaskSchedule schedule_;
    TrainOptions opt_;
    std::optional<Agent> agent_;
    ReplayBuffer buffer_;
    FramePool pool_;
    Rng env_rng_;
    std::optional<envs::GridWorld> env_;
    long global_step_ = 0;
    long episode_index_ = 0;
    double cumulative_return_ = 0.0;
    int task_index_ = 0;
    int exposure_ = 0;
    int segment_ = 0;
    long segment_start_ = 0;

    long eps_step() const {
        return agent_->config().eps_reset_on_switch ? global_step_ - segment_start_ : global_step_;
    }
    std::deque<double> recent_returns_;
    std::deque<double> recent_lengths_;
    std::optional<EpisodeRecord> last_episode_;
};

struct TrainResult {
    nets::NetworkParams params;
    long global_steps = 0;
    bool completed = true;
};

inline TrainResult train_loop(const envs::TaskSchedule& schedule, const AgentConfig& cfg, const TrainOptions& opt,
                              const TrainCallbacks& cb = {}) {
    Trainer tr(schedule, cfg, opt);
    const bool done = tr.run(cb);
    return {tr.agent().params(), tr.global_step(), done};
}

} // namespace sflab::agents
