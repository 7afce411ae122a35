#pragma once

#include "diffattack/attack.hpp"
#include "diffattack/campaign.hpp"
#include "diffattack/error.hpp"
#include "diffattack/io.hpp"
#include "diffattack/metrics.hpp"
#include "diffattack/model.hpp"
#include "diffattack/oracle.hpp"
#include "diffattack/remote.hpp"
#include "diffattack/rng.hpp"
#include "diffattack/tensor.hpp"
