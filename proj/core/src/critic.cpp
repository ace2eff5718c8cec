#include "bvs/critic.hpp"

namespace bvs {

template class Mlp<float>;
template class Mlp<double>;
template struct Critic<float>;
template struct Critic<double>;

}  // namespace bvs
