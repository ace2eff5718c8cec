#include "bvs/replay_buffer.hpp"

#include "bvs/agent.hpp"

namespace bvs {

template class ReplayBuffer<Episode>;

}  // namespace bvs
