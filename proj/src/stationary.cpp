#include "nlbb/configspace.hpp"
