# trainable-module substrate
