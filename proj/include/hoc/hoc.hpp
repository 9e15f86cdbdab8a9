#pragma once

#include "hoc/channel.hpp"
#include "hoc/harness.hpp"
#include "hoc/imd.hpp"
#include "hoc/link.hpp"
#include "hoc/lstsq.hpp"
#include "hoc/ofdm.hpp"
#include "hoc/pa.hpp"
#include "hoc/receivers.hpp"
