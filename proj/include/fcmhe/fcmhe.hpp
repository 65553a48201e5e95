#pragma once

// Umbrella header.

#include "fcmhe/channel.hpp"
#include "fcmhe/config.hpp"
#include "fcmhe/csv.hpp"
#include "fcmhe/discretize.hpp"
#include "fcmhe/kalman.hpp"
#include "fcmhe/log.hpp"
#include "fcmhe/metrics.hpp"
#include "fcmhe/mhe.hpp"
#include "fcmhe/model.hpp"
#include "fcmhe/net.hpp"
#include "fcmhe/nodes.hpp"
#include "fcmhe/qp.hpp"
#include "fcmhe/rng.hpp"
#include "fcmhe/road.hpp"
#include "fcmhe/scenario.hpp"
#include "fcmhe/sim.hpp"
#include "fcmhe/wire.hpp"
