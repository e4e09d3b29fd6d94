#pragma once

#include "npc/channel.hpp"
#include "npc/compensator.hpp"
#include "npc/control_unit.hpp"
#include "npc/domain.hpp"
#include "npc/estimator.hpp"
#include "npc/experiment.hpp"
#include "npc/io.hpp"
#include "npc/lqr.hpp"
#include "npc/metrics.hpp"
#include "npc/offline.hpp"
#include "npc/plant.hpp"
#include "npc/realtime.hpp"
#include "npc/udp.hpp"
#include "npc/wire.hpp"
