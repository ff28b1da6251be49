# Hyper-attributes that fully describe each layer type in a checkpoint
layer_attributes = {
    "fully_connected": ("d_in", "d_out"),
    "conv1d": ("window", "d_in", "d_out", "stride"),
    "activation": ("kind", "levels"),
}

# Trainable tensors of each layer type, in checkpoint and optimizer order
layer_parameters = {
    "fully_connected": ("weights", "bias"),
    "conv1d": ("kernel", "bias"),
    "activation": (),
}

# Roles and their input width as a multiple of N
network_input_multiplier = {
    "alice": 2,
    "bob": 2,
    "eve": 1,
}
