#pragma once

#include <optional>
#include <vector>

#include "sflab/envs/layout.hpp"

namespace sflab::envs {

struct TaskSpec {
    GridLayout layout;
    int max_steps_per_episode = 400;
    long training_steps = 0;
};

struct TaskSchedule {
    std::vector<TaskSpec> tasks;
    int exposures = 1;
    bool reset_buffer_on_switch = true;

    std::size_t length() const { return tasks.size() * static_cast<std::size_t>(exposures); }
};

struct ScheduledTask {
    const TaskSpec* task = nullptr;
    std::size_t task_index = 0;  // position within TaskSchedule::tasks
    int exposure = 0;            // 0-based
    bool buffer_reset = false;
};

inline void validate(const TaskSchedule& s) {
    if (s.tasks.empty()) throw ConfigError("schedule: no tasks");
    if (s.exposures < 1) throw ConfigError("schedule: exposures must be >= 1");
    for (const auto& t : s.tasks)
        if (t.max_steps_per_episode < 1) throw ConfigError("schedule: max_steps_per_episode must be >= 1");
}

// Tasks cycle in order, `exposures` times. nullopt once the schedule is exhausted.
inline std::optional<ScheduledTask> schedule_next(const TaskSchedule& s, std::size_t index) {
    validate(s);
    if (index >= s.length()) return std::nullopt;
    ScheduledTask out;
    out.task_index = index % s.tasks.size();
    out.exposure = static_cast<int>(index / s.tasks.size());
    out.task = &s.tasks[out.task_index];
    out.buffer_reset = index > 0 && s.reset_buffer_on_switch;
    return out;
}

} // namespace sflab::envs
